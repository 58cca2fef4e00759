//! Averaging and value-sampling projections of controls onto
//! piecewise-constant controls, and `L^s` distances between controls.
//!
//! The averaging operator replaces a control by its mean on each sampling
//! interval. It is linear, contracts every `L^s` norm and, for convex
//! constraint sets, maps `U`-valued controls to `U`-valued piecewise-constant
//! controls. The value-sampling projector instead freezes the control at one
//! sample point per interval, which preserves membership for arbitrary
//! (also non-convex) value sets.

use crate::system::{ControlSignal, Partition};
use nalgebra::DVector;

/// Sample-point rule of the value-sampling projector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleRule {
    /// `ξ_i = (t_i + t_{i+1}) / 2`.
    Midpoint,
    /// `ξ_i = t_i + (t_{i+1} - t_i) / 3`.
    LeftThird,
}

/// Union of the interior breakpoints of `signals` inside `(a, b)`, plus the
/// segment ends: the smooth pieces of every signal at once.
fn smooth_pieces(signals: &[&ControlSignal], a: f64, b: f64) -> Vec<(f64, f64)> {
    let eps = (b - a) * 1e-13;
    let mut cuts = vec![a];
    for sig in signals {
        for t in sig.breakpoints() {
            if t > a + eps && t < b - eps {
                cuts.push(t);
            }
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() <= eps);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Composite Simpson rule over one smooth piece `[a, b]`. The integrand is
/// read right-continuously except at `b`, where the left limit is taken, so
/// jumps at piece boundaries never leak into the wrong piece. Exact for
/// polynomials of degree at most 3 on the piece.
fn simpson_piece<F>(a: f64, b: f64, panels: usize, mut g: F) -> f64
where
    F: FnMut(f64, bool) -> f64,
{
    let p = {
        let q = panels.max(2);
        q + q % 2
    };
    let h = (b - a) / p as f64;
    let mut acc = g(a, false) + g(b, true);
    for k in 1..p {
        let w = if k % 2 == 0 { 2.0 } else { 4.0 };
        acc += w * g(a + h * k as f64, false);
    }
    acc * (h / 3.0)
}

/// Componentwise integral of the signal over `[a, b]`, split at breakpoints;
/// exact (up to rounding) for piecewise-constant signals and per-piece
/// polynomials of degree at most 3.
fn integrate_signal(u: &ControlSignal, a: f64, b: f64, quad_points: usize) -> DVector<f64> {
    let m = u.dim();
    let mut total = DVector::zeros(m);
    for (lo, hi) in smooth_pieces(&[u], a, b) {
        for i in 0..m {
            total[i] += simpson_piece(lo, hi, quad_points, |t, left| {
                if left {
                    u.eval_left(t)[i]
                } else {
                    u.eval(t)[i]
                }
            });
        }
    }
    total
}

/// Averaging projection: per-interval mean of `u` over each sampling
/// interval of `part`, as a right-continuous piecewise-constant control.
pub fn average_project(u: &ControlSignal, part: &Partition, quad_points: usize) -> ControlSignal {
    let times = part.times();
    let values = times
        .windows(2)
        .map(|w| integrate_signal(u, w[0], w[1], quad_points) / (w[1] - w[0]))
        .collect();
    ControlSignal::piecewise_constant(part.clone(), values).expect("shape by construction")
}

/// Value-sampling projection: per-interval constant equal to `u(ξ_i)` at the
/// rule's sample point (right-continuous representative at jumps). Values
/// stay in the constraint set whenever the values of `u` do, convex or not.
pub fn value_sample_project(
    u: &ControlSignal,
    part: &Partition,
    rule: SampleRule,
) -> ControlSignal {
    let times = part.times();
    let values = times
        .windows(2)
        .map(|w| {
            let xi = match rule {
                SampleRule::Midpoint => 0.5 * (w[0] + w[1]),
                SampleRule::LeftThird => w[0] + (w[1] - w[0]) / 3.0,
            };
            u.eval(xi)
        })
        .collect();
    ControlSignal::piecewise_constant(part.clone(), values).expect("shape by construction")
}

/// `L^s` distance between two controls on `[0, horizon]`; `s = ∞` is the
/// sup over a per-piece sampling grid. `grid` is the per-piece resolution
/// (Simpson panels, or sample count for `s = ∞`).
pub fn lp_distance(u: &ControlSignal, v: &ControlSignal, s: f64, horizon: f64, grid: usize) -> f64 {
    assert!(s >= 1.0 || s.is_infinite(), "exponent must be >= 1 or inf");
    let pieces = smooth_pieces(&[u, v], 0.0, horizon);

    if s.is_infinite() {
        let mut sup: f64 = 0.0;
        let samples = grid.max(2);
        for (lo, hi) in &pieces {
            for k in 0..samples {
                // strictly interior samples so each piece contributes its
                // own one-sided values
                let t = lo + (hi - lo) * (k as f64 + 0.5) / samples as f64;
                sup = sup.max((u.eval(t) - v.eval(t)).norm());
            }
        }
        return sup;
    }

    let mut acc = 0.0;
    for (lo, hi) in pieces {
        acc += simpson_piece(lo, hi, grid, |t, left| {
            let diff = if left {
                u.eval_left(t) - v.eval_left(t)
            } else {
                u.eval(t) - v.eval(t)
            };
            diff.norm().powf(s)
        });
    }
    acc.powf(1.0 / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn constant_control_is_fixed_point() {
        let u = ControlSignal::constant(dvector![3.5], 1.0);
        for n in [1, 2, 5] {
            let part = Partition::uniform(1.0, n);
            let avg = average_project(&u, &part, 8);
            for k in 0..n {
                assert_relative_eq!(
                    avg.eval((k as f64 + 0.5) / n as f64)[0],
                    3.5,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn identity_ramp_interval_means() {
        // u(t) = t on [0, 1], two intervals: means 0.25 and 0.75
        let u = ControlSignal::Analytic {
            exprs: vec![crate::expr::parse("t", 0, 0).unwrap()],
        };
        let part = Partition::uniform(1.0, 2);
        let avg = average_project(&u, &part, 8);
        assert_relative_eq!(avg.eval(0.25)[0], 0.25, epsilon = 1e-13);
        assert_relative_eq!(avg.eval(0.75)[0], 0.75, epsilon = 1e-13);
    }

    #[test]
    fn averaging_exact_on_subpartition_constants() {
        let inner = Partition::new(vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let u = ControlSignal::piecewise_constant(
            inner,
            vec![dvector![1.0], dvector![3.0], dvector![5.0]],
        )
        .unwrap();
        let part = Partition::uniform(1.0, 2);
        let avg = average_project(&u, &part, 4);
        // first interval [0, 0.5): mean of 1 on [0,.25) and 3 on [.25,.5)
        assert_relative_eq!(avg.eval(0.1)[0], 2.0, epsilon = 1e-13);
        // second interval holds 5 throughout
        assert_relative_eq!(avg.eval(0.7)[0], 5.0, epsilon = 1e-13);
    }

    #[test]
    fn value_sampling_is_identity_on_matching_partition() {
        let part = Partition::new(vec![0.0, 0.3, 1.0]).unwrap();
        let u =
            ControlSignal::piecewise_constant(part.clone(), vec![dvector![2.0], dvector![-1.0]])
                .unwrap();
        let v = value_sample_project(&u, &part, SampleRule::Midpoint);
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            assert_relative_eq!(v.eval(t)[0], u.eval(t)[0]);
        }
    }

    #[test]
    fn lp_distance_basics() {
        let one = ControlSignal::constant(dvector![1.0], 2.0);
        let zero = ControlSignal::constant(dvector![0.0], 2.0);
        assert_relative_eq!(lp_distance(&one, &one, 2.0, 2.0, 16), 0.0);
        // ||1 - 0||_{L^s} = T^(1/s)
        for s in [1.0, 2.0, 3.0] {
            assert_relative_eq!(
                lp_distance(&one, &zero, s, 2.0, 16),
                2.0f64.powf(1.0 / s),
                epsilon = 1e-12
            );
        }
        assert_relative_eq!(lp_distance(&one, &zero, f64::INFINITY, 2.0, 16), 1.0);
    }

    #[test]
    fn averaging_linear_in_the_control() {
        let u = ControlSignal::Analytic {
            exprs: vec![crate::expr::parse("sin(3*t)", 0, 0).unwrap()],
        };
        let v = ControlSignal::Analytic {
            exprs: vec![crate::expr::parse("t^2", 0, 0).unwrap()],
        };
        let combo = crate::endpoint::combine(&u, &[(2.0, &v)]);
        let part = Partition::uniform(1.0, 4);
        let left = average_project(&combo, &part, 16);
        let au = average_project(&u, &part, 16);
        let av = average_project(&v, &part, 16);
        for k in 0..4 {
            let t = (k as f64 + 0.5) / 4.0;
            // identical quadrature grids make this an exact identity
            assert_relative_eq!(
                left.eval(t)[0],
                au.eval(t)[0] + 2.0 * av.eval(t)[0],
                epsilon = 1e-15
            );
        }
    }
}
