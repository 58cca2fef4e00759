//! Fixed-step RK4 integration of the state, variational and adjoint
//! equations.
//!
//! All integrators share one grid construction: a uniform grid with step at
//! most `1/steps_per_unit`, refined so that every control breakpoint is a
//! node. No step straddles a control discontinuity, so classical RK4 keeps
//! its full order on piecewise-smooth right-hand sides. Runs are
//! deterministic: identical inputs produce bit-identical trajectories.

use crate::system::{ControlSignal, ControlSystem, SystemError};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum OdeError {
    #[error("state became non-finite at t={t}")]
    BlowUp { t: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Builds the integration grid for `[t0, t1]`: uniform nodes plus every
/// breakpoint of the signals in `signals`.
pub fn integration_grid(
    t0: f64,
    t1: f64,
    steps_per_unit: usize,
    signals: &[&ControlSignal],
) -> Vec<f64> {
    let span = t1 - t0;
    let n_steps = ((span * steps_per_unit as f64).ceil() as usize).max(1);
    let mut grid: Vec<f64> = (0..=n_steps)
        .map(|k| t0 + span * k as f64 / n_steps as f64)
        .collect();
    for sig in signals {
        for b in sig.breakpoints() {
            if b > t0 && b < t1 {
                grid.push(b);
            }
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // drop nodes that collide (keeps the first occurrence, i.e. uniform nodes
    // survive and near-duplicate breakpoints are merged)
    let min_gap = span * 1e-12;
    let mut out = Vec::with_capacity(grid.len());
    for t in grid {
        match out.last() {
            Some(&prev) if t - prev <= min_gap => {}
            _ => out.push(t),
        }
    }
    // the endpoint must survive merging
    if let Some(last) = out.last_mut() {
        *last = t1;
    }
    out
}

/// Discrete solution of the state equation on its integration grid.
/// Evaluation between nodes is piecewise linear.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Index of the grid node closest to `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.times.len() => self.times.len() - 1,
            Err(i) => {
                if (t - self.times[i - 1]) <= (self.times[i] - t) {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Piecewise-linear interpolation between grid nodes.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.states[last].clone();
        }
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i - 1,
        };
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        &self.states[i] * (1.0 - w) + &self.states[i + 1] * w
    }
}

/// Adjoint arc `p` on the integration grid, stored ascending in time;
/// `p(T)` equals the requested terminal condition.
#[derive(Clone, Debug)]
pub struct AdjointArc {
    pub times: Vec<f64>,
    pub costates: Vec<DVector<f64>>,
}

impl AdjointArc {
    pub fn initial(&self) -> &DVector<f64> {
        &self.costates[0]
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.costates.last().unwrap()
    }
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<(), OdeError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OdeError::BlowUp { t })
    }
}

/// One RK4 step of `y' = rhs(t, y, u(t))` on `[a, b]`, with the control read
/// from the left limit at `b` so the step never crosses a discontinuity.
fn rk4_step<F>(
    u: &ControlSignal,
    a: f64,
    b: f64,
    y: &DVector<f64>,
    mut rhs: F,
) -> Result<DVector<f64>, OdeError>
where
    F: FnMut(f64, &DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, OdeError>,
{
    let h = b - a;
    let mid = 0.5 * (a + b);
    let u_a = u.eval(a);
    let u_mid = u.eval(mid);
    let u_b = u.eval_left(b);
    let k1 = rhs(a, y, &u_a)?;
    let k2 = rhs(mid, &(y + &k1 * (h / 2.0)), &u_mid)?;
    let k3 = rhs(mid, &(y + &k2 * (h / 2.0)), &u_mid)?;
    let k4 = rhs(b, &(y + &k3 * h), &u_b)?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates the state equation from `(t0, x_init)` to `t1`.
pub fn integrate_state_between(
    sys: &ControlSystem,
    u: &ControlSignal,
    t0: f64,
    x_init: DVector<f64>,
    t1: f64,
    steps_per_unit: usize,
) -> Result<Trajectory, OdeError> {
    let grid = integration_grid(t0, t1, steps_per_unit, &[u]);
    let mut states = Vec::with_capacity(grid.len());
    check_finite(&x_init, t0)?;
    states.push(x_init);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let x = states.last().unwrap();
        let next = rk4_step(u, a, b, x, |t, y, uv| {
            sys.dynamics.eval(y, uv, t).map_err(OdeError::from)
        })?;
        check_finite(&next, b)?;
        states.push(next);
    }
    Ok(Trajectory {
        times: grid,
        states,
    })
}

/// Integrates the state equation `x' = f(x, u, t)` from `x(0) = x0` over the
/// whole horizon.
pub fn integrate_state(
    sys: &ControlSystem,
    u: &ControlSignal,
    steps_per_unit: usize,
) -> Result<Trajectory, OdeError> {
    integrate_state_between(sys, u, 0.0, sys.x0.clone(), sys.horizon, steps_per_unit)
}

/// Integrates the variational equation
///
/// ```text
/// w'(t) = ∇x f(x_u(t), u(t), t) w(t) + ∇u f(x_u(t), u(t), t) v(t)
/// ```
///
/// from `(start, w_start)` to `T` along the trajectory of `(sys, u)` and
/// returns `w(T)`. With `start = 0`, `w_start = 0` this is the directional
/// differential of the end-point mapping; with `v ≡ 0` and `w_start` a jump
/// it transports a strong variation.
///
/// The state is re-integrated alongside `w` (started from `base` at `start`)
/// so both components carry full RK4 accuracy.
pub fn integrate_variational(
    sys: &ControlSystem,
    u: &ControlSignal,
    base: &Trajectory,
    v: &ControlSignal,
    start: f64,
    w_start: DVector<f64>,
    steps_per_unit: usize,
) -> Result<DVector<f64>, OdeError> {
    let n = sys.n;
    let t1 = sys.horizon;
    let grid = integration_grid(start, t1, steps_per_unit, &[u, v]);
    let x_init = base.eval(start);

    // augmented vector [x; w]
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(&x_init);
    y.rows_mut(n, n).copy_from(&w_start);

    for step in grid.windows(2) {
        let (a, b) = (step[0], step[1]);
        let h = b - a;
        let mid = 0.5 * (a + b);
        let stages = [
            (a, u.eval(a), v.eval(a)),
            (mid, u.eval(mid), v.eval(mid)),
            (b, u.eval_left(b), v.eval_left(b)),
        ];
        let rhs = |t: f64,
                   yv: &DVector<f64>,
                   uv: &DVector<f64>,
                   vv: &DVector<f64>|
         -> Result<DVector<f64>, OdeError> {
            let x = yv.rows(0, n).into_owned();
            let w = yv.rows(n, n).into_owned();
            let ev = sys.dynamics.eval_with_jacobians(&x, uv, t)?;
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&ev.value);
            out.rows_mut(n, n)
                .copy_from(&(&ev.grad_x * w + &ev.grad_u * vv));
            Ok(out)
        };
        let k1 = rhs(stages[0].0, &y, &stages[0].1, &stages[0].2)?;
        let k2 = rhs(
            stages[1].0,
            &(&y + &k1 * (h / 2.0)),
            &stages[1].1,
            &stages[1].2,
        )?;
        let k3 = rhs(
            stages[1].0,
            &(&y + &k2 * (h / 2.0)),
            &stages[1].1,
            &stages[1].2,
        )?;
        let k4 = rhs(stages[2].0, &(&y + &k3 * h), &stages[2].1, &stages[2].2)?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        check_finite(&y, b)?;
    }
    Ok(y.rows(n, n).into_owned())
}

/// Integrates the adjoint equation `p'(t) = -∇x H(x_u(t), u(t), p(t), t)`,
/// with `H(x, u, p, t) = ⟨p, f(x, u, t)⟩`, backward from `p(T) = psi`.
///
/// The state is re-integrated backward alongside `p` from the final state of
/// `base`, keeping full RK4 accuracy in the coefficients.
pub fn integrate_adjoint(
    sys: &ControlSystem,
    u: &ControlSignal,
    base: &Trajectory,
    psi: DVector<f64>,
    steps_per_unit: usize,
) -> Result<AdjointArc, OdeError> {
    let (arc, _) = adjoint_with_pairing_integral(sys, u, base, psi, None, steps_per_unit)?;
    Ok(arc)
}

/// Backward pass computing the adjoint arc and, when a direction `v` is
/// given, the pairing integral `∫_0^T ⟨∇u H(x_u, u, p, t), v(t)⟩ dt`
/// accumulated inside the same RK4 sweep.
pub fn adjoint_with_pairing_integral(
    sys: &ControlSystem,
    u: &ControlSignal,
    base: &Trajectory,
    psi: DVector<f64>,
    v: Option<&ControlSignal>,
    steps_per_unit: usize,
) -> Result<(AdjointArc, f64), OdeError> {
    let n = sys.n;
    let mut signals = vec![u];
    if let Some(vs) = v {
        signals.push(vs);
    }
    let grid = integration_grid(0.0, sys.horizon, steps_per_unit, &signals);

    // augmented vector [x; p; s]
    let mut y = DVector::zeros(2 * n + 1);
    y.rows_mut(0, n).copy_from(base.final_state());
    y.rows_mut(n, n).copy_from(&psi);

    let rhs = |t: f64,
               yv: &DVector<f64>,
               uv: &DVector<f64>,
               vv: Option<DVector<f64>>|
     -> Result<DVector<f64>, OdeError> {
        let x = yv.rows(0, n).into_owned();
        let p = yv.rows(n, n).into_owned();
        let ev = sys.dynamics.eval_with_jacobians(&x, uv, t)?;
        let mut out = DVector::zeros(2 * n + 1);
        out.rows_mut(0, n).copy_from(&ev.value);
        out.rows_mut(n, n)
            .copy_from(&(-(ev.grad_x.transpose() * &p)));
        if let Some(vv) = vv {
            // d/dt ⟨p, w⟩ = ⟨∇u H, v⟩ = ⟨∇u fᵀ p, v⟩
            out[2 * n] = (ev.grad_u.transpose() * &p).dot(&vv);
        }
        Ok(out)
    };

    let mut costates_rev = Vec::with_capacity(grid.len());
    costates_rev.push(psi.clone());
    // march backward over the grid
    for step in grid.windows(2).rev() {
        let (a, b) = (step[0], step[1]);
        let h = a - b; // negative
        let mid = 0.5 * (a + b);
        let u_b = u.eval_left(b);
        let u_mid = u.eval(mid);
        let u_a = u.eval(a);
        let v_at = |t: f64, left: bool| -> Option<DVector<f64>> {
            v.map(|vs| if left { vs.eval_left(t) } else { vs.eval(t) })
        };
        let k1 = rhs(b, &y, &u_b, v_at(b, true))?;
        let k2 = rhs(mid, &(&y + &k1 * (h / 2.0)), &u_mid, v_at(mid, false))?;
        let k3 = rhs(mid, &(&y + &k2 * (h / 2.0)), &u_mid, v_at(mid, false))?;
        let k4 = rhs(a, &(&y + &k3 * h), &u_a, v_at(a, false))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        check_finite(&y, a)?;
        costates_rev.push(y.rows(n, n).into_owned());
    }
    costates_rev.reverse();
    // s(0) accumulated backward equals -∫_0^T ⟨∇u H, v⟩ dt
    let integral = -y[2 * n];
    Ok((
        AdjointArc {
            times: grid,
            costates: costates_rev,
        },
        integral,
    ))
}

/// Defect of the duality identity
/// `⟨p(T), w(T)⟩ - ⟨p(0), w(0)⟩ - ∫ ⟨∇u H, v⟩ dt` for the variational
/// solution `w` started at `(0, w_start)` and the adjoint ending at `psi`.
/// Zero up to integrator error.
pub fn duality_defect(
    sys: &ControlSystem,
    u: &ControlSignal,
    base: &Trajectory,
    v: &ControlSignal,
    w_start: DVector<f64>,
    psi: DVector<f64>,
    steps_per_unit: usize,
) -> Result<f64, OdeError> {
    let w_final = integrate_variational(sys, u, base, v, 0.0, w_start.clone(), steps_per_unit)?;
    let (arc, integral) =
        adjoint_with_pairing_integral(sys, u, base, psi.clone(), Some(v), steps_per_unit)?;
    let lhs = psi.dot(&w_final);
    let rhs = arc.initial().dot(&w_start) + integral;
    Ok(lhs - rhs)
}
