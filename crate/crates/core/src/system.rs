//! Control systems, constraint sets, partitions and control signals.
//!
//! A [`ControlSystem`] bundles the dimensions, horizon, starting point,
//! dynamics and control-constraint set of the controlled ODE
//! `x'(t) = f(x(t), u(t), t)` on `[0, T]`. All types here are immutable
//! after construction and all operations are pure.

use crate::expr::{self, Expression};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum SystemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("partition times must start at 0 and be strictly increasing")]
    BadPartition,
    #[error("piecewise-constant control needs one value per sampling interval")]
    BadSignalShape,
    #[error("truncation radius must be positive, got {0}")]
    BadTruncationRadius(f64),
    #[error("operation requires a convex constraint set")]
    NonConvexConstraint,
    #[error("dynamics evaluation failed at t={t}: {source}")]
    Domain {
        t: f64,
        #[source]
        source: expr::DomainError,
    },
}

/// Set of admissible control values `U ⊆ R^m`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    /// No constraint, `U = R^m`.
    AllSpace,
    /// Axis-aligned box `[lo_1, hi_1] × … × [lo_m, hi_m]`.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// Closed Euclidean ball.
    Ball { center: DVector<f64>, radius: f64 },
    /// Finite set of admissible values (non-convex in general).
    FiniteSet { points: Vec<DVector<f64>> },
}

impl ConstraintSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        ConstraintSet::Box {
            lo: DVector::from_element(1, lo),
            hi: DVector::from_element(1, hi),
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, ConstraintSet::FiniteSet { .. })
    }

    /// Euclidean distance from `w` to the set.
    pub fn distance(&self, w: &DVector<f64>) -> f64 {
        match self {
            ConstraintSet::AllSpace => 0.0,
            ConstraintSet::Box { lo, hi } => {
                let mut s = 0.0;
                for i in 0..w.len() {
                    let d = if w[i] < lo[i] {
                        lo[i] - w[i]
                    } else if w[i] > hi[i] {
                        w[i] - hi[i]
                    } else {
                        0.0
                    };
                    s += d * d;
                }
                s.sqrt()
            }
            ConstraintSet::Ball { center, radius } => ((w - center).norm() - radius).max(0.0),
            ConstraintSet::FiniteSet { points } => points
                .iter()
                .map(|p| (w - p).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Nearest point of the set (any nearest point for `FiniteSet`).
    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintSet::AllSpace => w.clone(),
            ConstraintSet::Box { lo, hi } => {
                DVector::from_fn(w.len(), |i, _| w[i].clamp(lo[i], hi[i]))
            }
            ConstraintSet::Ball { center, radius } => {
                let d = w - center;
                let norm = d.norm();
                if norm <= *radius {
                    w.clone()
                } else {
                    center + d * (*radius / norm)
                }
            }
            ConstraintSet::FiniteSet { points } => {
                let mut best = &points[0];
                let mut best_d = f64::INFINITY;
                for p in points {
                    let d = (w - p).norm();
                    if d < best_d {
                        best_d = d;
                        best = p;
                    }
                }
                best.clone()
            }
        }
    }

    /// Whether `dist(w, U) ≤ tol`.
    pub fn membership(&self, w: &DVector<f64>, tol: f64) -> bool {
        self.distance(w) <= tol
    }
}

/// Active-bound detection tolerance for cone operations on boxes and balls.
const ACTIVE_TOL: f64 = 1e-9;

/// Euclidean distance from `theta` to the normal cone `N_U[w]`.
///
/// Zero exactly when `theta` is a normal direction at `w`. Rejects the
/// non-convex `FiniteSet` variant.
pub fn normal_cone_distance(
    set: &ConstraintSet,
    w: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<f64, SystemError> {
    match set {
        ConstraintSet::AllSpace => Ok(theta.norm()),
        ConstraintSet::Box { lo, hi } => {
            let mut s = 0.0;
            for i in 0..w.len() {
                let at_lo = (w[i] - lo[i]).abs() <= ACTIVE_TOL;
                let at_hi = (hi[i] - w[i]).abs() <= ACTIVE_TOL;
                let d = match (at_lo, at_hi) {
                    // degenerate interval: every direction is normal
                    (true, true) => 0.0,
                    (false, true) => (-theta[i]).max(0.0),
                    (true, false) => theta[i].max(0.0),
                    (false, false) => theta[i].abs(),
                };
                s += d * d;
            }
            Ok(s.sqrt())
        }
        ConstraintSet::Ball { center, radius } => {
            let d = w - center;
            let norm = d.norm();
            if (norm - radius).abs() > ACTIVE_TOL || norm == 0.0 {
                // interior point: normal cone is {0}
                Ok(theta.norm())
            } else {
                // boundary: normal cone is the outward ray R_+ (w - center)
                let dir = d / norm;
                let along = theta.dot(&dir).max(0.0);
                Ok((theta - dir * along).norm())
            }
        }
        ConstraintSet::FiniteSet { .. } => Err(SystemError::NonConvexConstraint),
    }
}

/// Projects a direction `d` onto the tangent cone of the set at `w`,
/// zeroing (box) or removing (ball) the components that push out of the set.
pub fn project_tangent(
    set: &ConstraintSet,
    w: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DVector<f64>, SystemError> {
    match set {
        ConstraintSet::AllSpace => Ok(d.clone()),
        ConstraintSet::Box { lo, hi } => Ok(DVector::from_fn(d.len(), |i, _| {
            let at_lo = (w[i] - lo[i]).abs() <= ACTIVE_TOL;
            let at_hi = (hi[i] - w[i]).abs() <= ACTIVE_TOL;
            if (at_hi && d[i] > 0.0) || (at_lo && d[i] < 0.0) {
                0.0
            } else {
                d[i]
            }
        })),
        ConstraintSet::Ball { center, radius } => {
            let r = w - center;
            let norm = r.norm();
            if (norm - radius).abs() > ACTIVE_TOL || norm == 0.0 {
                Ok(d.clone())
            } else {
                let dir = r / norm;
                let outward = d.dot(&dir).max(0.0);
                Ok(d - dir * outward)
            }
        }
        ConstraintSet::FiniteSet { .. } => Err(SystemError::NonConvexConstraint),
    }
}

/// Sampling times `0 = t_0 < t_1 < … < t_N = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self, SystemError> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(SystemError::BadPartition);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SystemError::BadPartition);
        }
        Ok(Partition { times })
    }

    /// Uniform partition of `[0, horizon]` with `n_intervals` intervals.
    pub fn uniform(horizon: f64, n_intervals: usize) -> Self {
        let times = (0..=n_intervals)
            .map(|k| horizon * k as f64 / n_intervals as f64)
            .collect();
        Partition { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn num_intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Largest sampling-interval length.
    pub fn norm(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Smallest sampling-interval length.
    pub fn min_gap(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Index `i` with `t ∈ [t_i, t_{i+1})`, clamped to the last interval at `t = T`.
    pub fn interval_index(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        }
    }
}

/// Zero-order or linear reconstruction between grid samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hold {
    ZeroOrder,
    Linear,
}

/// Constant override of a control on `[start, end)`, used by needle-like
/// variations.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub start: f64,
    pub end: f64,
    pub value: DVector<f64>,
}

/// Evaluable control `u(t)` on `[0, T]`.
///
/// Piecewise-constant controls are right-continuous: `u(t) = u_i` on
/// `[t_i, t_{i+1})`.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSignal {
    PiecewiseConstant {
        partition: Partition,
        values: Vec<DVector<f64>>,
    },
    GridSampled {
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
        hold: Hold,
    },
    /// Components given by expressions in `t` only.
    Analytic { exprs: Vec<Expression> },
    /// A base control overridden by finitely many constant patches,
    /// sorted by start time and pairwise disjoint.
    Spliced {
        base: Box<ControlSignal>,
        patches: Vec<Patch>,
    },
    /// Pointwise linear combination `base(t) + Σ c_k v_k(t)`.
    Combination {
        base: Box<ControlSignal>,
        terms: Vec<(f64, ControlSignal)>,
    },
}

impl ControlSignal {
    pub fn piecewise_constant(
        partition: Partition,
        values: Vec<DVector<f64>>,
    ) -> Result<Self, SystemError> {
        if values.len() != partition.num_intervals() {
            return Err(SystemError::BadSignalShape);
        }
        Ok(ControlSignal::PiecewiseConstant { partition, values })
    }

    pub fn constant(value: DVector<f64>, horizon: f64) -> Self {
        ControlSignal::PiecewiseConstant {
            partition: Partition::uniform(horizon, 1),
            values: vec![value],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSignal::PiecewiseConstant { values, .. } => values[0].len(),
            ControlSignal::GridSampled { values, .. } => values[0].len(),
            ControlSignal::Analytic { exprs } => exprs.len(),
            ControlSignal::Spliced { base, .. } => base.dim(),
            ControlSignal::Combination { base, .. } => base.dim(),
        }
    }

    /// Right-continuous evaluation at `t`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            ControlSignal::PiecewiseConstant { partition, values } => {
                values[partition.interval_index(t)].clone()
            }
            ControlSignal::GridSampled {
                times,
                values,
                hold,
            } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[last] {
                    return values[last].clone();
                }
                let i = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                match hold {
                    Hold::ZeroOrder => values[i].clone(),
                    Hold::Linear => {
                        let w = (t - times[i]) / (times[i + 1] - times[i]);
                        &values[i] * (1.0 - w) + &values[i + 1] * w
                    }
                }
            }
            ControlSignal::Analytic { exprs } => DVector::from_fn(exprs.len(), |i, _| {
                exprs[i]
                    .eval(&[], &[], t)
                    .expect("analytic control evaluation failed")
            }),
            ControlSignal::Spliced { base, patches } => {
                for p in patches {
                    if t >= p.start && t < p.end {
                        return p.value.clone();
                    }
                }
                base.eval(t)
            }
            ControlSignal::Combination { base, terms } => {
                let mut val = base.eval(t);
                for (c, v) in terms {
                    val += v.eval(t) * *c;
                }
                val
            }
        }
    }

    /// Left-limit evaluation, used at the right end of an integration step so
    /// that a step never reads past its own sampling interval.
    pub fn eval_left(&self, t: f64) -> DVector<f64> {
        match self {
            ControlSignal::PiecewiseConstant { partition, values } => {
                let times = partition.times();
                // interval with t_i < t <= t_{i+1}
                let mut i = partition.interval_index(t);
                if i > 0 && times[i] == t {
                    i -= 1;
                }
                values[i.min(values.len() - 1)].clone()
            }
            ControlSignal::GridSampled {
                times,
                values,
                hold,
            } => match hold {
                Hold::Linear => self.eval(t),
                Hold::ZeroOrder => {
                    if t <= times[0] {
                        return values[0].clone();
                    }
                    let i = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
                        Ok(i) => i.saturating_sub(1),
                        Err(i) => i - 1,
                    };
                    values[i.min(values.len() - 1)].clone()
                }
            },
            ControlSignal::Analytic { .. } => self.eval(t),
            ControlSignal::Spliced { base, patches } => {
                for p in patches {
                    if t > p.start && t <= p.end {
                        return p.value.clone();
                    }
                }
                base.eval_left(t)
            }
            ControlSignal::Combination { base, terms } => {
                let mut val = base.eval_left(t);
                for (c, v) in terms {
                    val += v.eval_left(t) * *c;
                }
                val
            }
        }
    }

    /// Interior times where the signal may be discontinuous (or kinked).
    /// Integration grids and quadratures are split at these points.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ControlSignal::PiecewiseConstant { partition, .. } => {
                partition.times()[1..partition.times().len() - 1].to_vec()
            }
            ControlSignal::GridSampled { times, .. } => times[1..times.len() - 1].to_vec(),
            ControlSignal::Analytic { .. } => Vec::new(),
            ControlSignal::Spliced { base, patches } => {
                let mut bps = base.breakpoints();
                for p in patches {
                    bps.push(p.start);
                    bps.push(p.end);
                }
                bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
                bps.dedup();
                bps
            }
            ControlSignal::Combination { base, terms } => {
                let mut bps = base.breakpoints();
                for (_, v) in terms {
                    bps.extend(v.breakpoints());
                }
                bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
                bps.dedup();
                bps
            }
        }
    }

    /// Sup-norm of the signal. Exact for piecewise-constant and
    /// linearly-held signals; analytic signals are sampled on `probe` points.
    pub fn linf_norm(&self, horizon: f64, probe: usize) -> f64 {
        match self {
            ControlSignal::PiecewiseConstant { values, .. } => {
                values.iter().map(|v| v.amax()).fold(0.0, f64::max)
            }
            ControlSignal::GridSampled { values, .. } => {
                values.iter().map(|v| v.amax()).fold(0.0, f64::max)
            }
            ControlSignal::Analytic { .. } => (0..=probe)
                .map(|k| self.eval(horizon * k as f64 / probe as f64).amax())
                .fold(0.0, f64::max),
            ControlSignal::Spliced { base, patches } => {
                let mut m = base.linf_norm(horizon, probe);
                for p in patches {
                    if p.end > p.start {
                        m = m.max(p.value.amax());
                    }
                }
                m
            }
            // triangle-inequality upper bound, exact when terms do not overlap
            ControlSignal::Combination { base, terms } => {
                let mut m = base.linf_norm(horizon, probe);
                for (c, v) in terms {
                    m += c.abs() * v.linf_norm(horizon, probe);
                }
                m
            }
        }
    }
}

/// How the dynamics `f(x, u, t)` is specified.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    /// One expression per state coordinate.
    Expressions(Vec<Expression>),
    /// `f(x, u, t) = A x + B u + g`.
    LinearAutonomous {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        drift: DVector<f64>,
    },
    /// Base dynamics multiplied by the `C¹` cutoff `Λ^M(x, u)`, which is 1
    /// on the closed balls of radius `2M` and 0 outside the open balls of
    /// radius `3M`.
    Truncated { base: Box<Dynamics>, radius: f64 },
}

/// Scalar cutoff profile: 1 for `r ≤ 2M`, 0 for `r ≥ 3M`, cubic smoothstep
/// `1 - 3q² + 2q³` with `q = (r - 2M)/M` in between.
pub fn cutoff_profile(m: f64, r: f64) -> f64 {
    if r <= 2.0 * m {
        1.0
    } else if r >= 3.0 * m {
        0.0
    } else {
        let q = (r - 2.0 * m) / m;
        1.0 - 3.0 * q * q + 2.0 * q * q * q
    }
}

/// Derivative of [`cutoff_profile`] with respect to `r`.
fn cutoff_profile_derivative(m: f64, r: f64) -> f64 {
    if r <= 2.0 * m || r >= 3.0 * m {
        0.0
    } else {
        let q = (r - 2.0 * m) / m;
        (-6.0 * q + 6.0 * q * q) / m
    }
}

/// Value of the separable cutoff `Λ^M(x, u)`.
pub fn cutoff_value(m: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    cutoff_profile(m, x.norm()) * cutoff_profile(m, u.norm())
}

/// Value and Jacobians of the dynamics at a point.
#[derive(Clone, Debug)]
pub struct DynamicsEval {
    pub value: DVector<f64>,
    /// `∂f/∂x`, `n × n`.
    pub grad_x: DMatrix<f64>,
    /// `∂f/∂u`, `n × m`.
    pub grad_u: DMatrix<f64>,
}

impl Dynamics {
    pub fn eval(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>, SystemError> {
        match self {
            Dynamics::Expressions(exprs) => {
                let xs = x.as_slice();
                let us = u.as_slice();
                let mut out = DVector::zeros(exprs.len());
                for (i, e) in exprs.iter().enumerate() {
                    out[i] = e
                        .eval(xs, us, t)
                        .map_err(|source| SystemError::Domain { t, source })?;
                }
                Ok(out)
            }
            Dynamics::LinearAutonomous { a, b, drift } => Ok(a * x + b * u + drift),
            Dynamics::Truncated { base, radius } => {
                let f = base.eval(x, u, t)?;
                Ok(f * cutoff_value(*radius, x, u))
            }
        }
    }

    pub fn eval_with_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> Result<DynamicsEval, SystemError> {
        let n = x.len();
        let m = u.len();
        match self {
            Dynamics::Expressions(exprs) => {
                let xs = x.as_slice();
                let us = u.as_slice();
                let mut value = DVector::zeros(n);
                let mut grad_x = DMatrix::zeros(n, n);
                let mut grad_u = DMatrix::zeros(n, m);
                for (i, e) in exprs.iter().enumerate() {
                    let d = e
                        .eval_dual(xs, us, t)
                        .map_err(|source| SystemError::Domain { t, source })?;
                    value[i] = d.value;
                    for j in 0..n {
                        grad_x[(i, j)] = d.partials[j];
                    }
                    for j in 0..m {
                        grad_u[(i, j)] = d.partials[n + j];
                    }
                }
                Ok(DynamicsEval {
                    value,
                    grad_x,
                    grad_u,
                })
            }
            Dynamics::LinearAutonomous { a, b, drift } => Ok(DynamicsEval {
                value: a * x + b * u + drift,
                grad_x: a.clone(),
                grad_u: b.clone(),
            }),
            Dynamics::Truncated { base, radius } => {
                let inner = base.eval_with_jacobians(x, u, t)?;
                let m_rad = *radius;
                let xn = x.norm();
                let un = u.norm();
                let sx = cutoff_profile(m_rad, xn);
                let su = cutoff_profile(m_rad, un);
                let lambda = sx * su;
                // ∇x Λ = s(‖u‖) s'(‖x‖) x/‖x‖ (zero where the profile is flat)
                let dsx = cutoff_profile_derivative(m_rad, xn);
                let dsu = cutoff_profile_derivative(m_rad, un);
                let mut grad_x = &inner.grad_x * lambda;
                let mut grad_u = &inner.grad_u * lambda;
                if dsx != 0.0 && xn > 0.0 {
                    let dir = x / xn;
                    grad_x += &inner.value * (su * dsx) * dir.transpose();
                }
                if dsu != 0.0 && un > 0.0 {
                    let dir = u / un;
                    grad_u += &inner.value * (sx * dsu) * dir.transpose();
                }
                Ok(DynamicsEval {
                    value: &inner.value * lambda,
                    grad_x,
                    grad_u,
                })
            }
        }
    }
}

/// A control system instance: dimensions, horizon, start point, dynamics,
/// control-constraint set.
#[derive(Clone, Debug)]
pub struct ControlSystem {
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub x0: DVector<f64>,
    pub dynamics: Dynamics,
    pub constraint: ConstraintSet,
}

impl ControlSystem {
    pub fn new(
        n: usize,
        m: usize,
        horizon: f64,
        x0: DVector<f64>,
        dynamics: Dynamics,
        constraint: ConstraintSet,
    ) -> Result<Self, SystemError> {
        if horizon <= 0.0 {
            return Err(SystemError::NonPositiveHorizon(horizon));
        }
        if x0.len() != n {
            return Err(SystemError::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
        if let Dynamics::Expressions(exprs) = &dynamics {
            if exprs.len() != n {
                return Err(SystemError::DimensionMismatch {
                    expected: n,
                    got: exprs.len(),
                });
            }
        }
        Ok(ControlSystem {
            n,
            m,
            horizon,
            x0,
            dynamics,
            constraint,
        })
    }

    /// Replaces the dynamics by the truncated dynamics `f^M = Λ^M f`.
    /// Inside the radius-`2M` balls the two systems coincide.
    pub fn truncate(&self, radius: f64) -> Result<ControlSystem, SystemError> {
        if radius <= 0.0 {
            return Err(SystemError::BadTruncationRadius(radius));
        }
        let mut out = self.clone();
        out.dynamics = Dynamics::Truncated {
            base: Box::new(self.dynamics.clone()),
            radius,
        };
        Ok(out)
    }
}
