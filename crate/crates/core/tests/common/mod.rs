//! Example systems shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{dvector, DMatrix, DVector};
use reach_core::expr;
use reach_core::system::{ConstraintSet, ControlSignal, ControlSystem, Dynamics, Hold, Partition};

pub const PI: f64 = std::f64::consts::PI;

/// `x' = 1 + (u - t)²` on `[0, 1]`, unconstrained; the ramp `u(t) = t`
/// steers 0 to 1 and is the only control doing so.
pub fn escape_square_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        1,
        1,
        1.0,
        dvector![0.0],
        Dynamics::Expressions(vec![expr::parse("1 + (u1 - t)^2", 1, 1).unwrap()]),
        ConstraintSet::AllSpace,
    )
    .unwrap();
    let u = ControlSignal::Analytic {
        exprs: vec![expr::parse("t", 0, 0).unwrap()],
    };
    (sys, u, dvector![1.0])
}

/// `x' = u` on `[0, 1]` with `U = [-1, 1]` and the saturated control `u ≡ 1`.
pub fn saturated_integrator_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        1,
        1,
        1.0,
        dvector![0.0],
        Dynamics::LinearAutonomous {
            a: DMatrix::zeros(1, 1),
            b: DMatrix::identity(1, 1),
            drift: DVector::zeros(1),
        },
        ConstraintSet::interval(-1.0, 1.0),
    )
    .unwrap();
    let u = ControlSignal::constant(dvector![1.0], 1.0);
    (sys, u, dvector![1.0])
}

/// `x' = u³` on `[0, 1]` with `U = [-1, 1]` and `u ≡ 0`.
pub fn cubic_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        1,
        1,
        1.0,
        dvector![0.0],
        Dynamics::Expressions(vec![expr::parse("u1^3", 1, 1).unwrap()]),
        ConstraintSet::interval(-1.0, 1.0),
    )
    .unwrap();
    let u = ControlSignal::constant(dvector![0.0], 1.0);
    (sys, u, dvector![0.0])
}

/// `x' = u₁ u₂` on `[0, 1]` with `U = [-1, 1]²` and `u ≡ 0`.
pub fn bilinear_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        1,
        2,
        1.0,
        dvector![0.0],
        Dynamics::Expressions(vec![expr::parse("u1*u2", 1, 2).unwrap()]),
        ConstraintSet::Box {
            lo: dvector![-1.0, -1.0],
            hi: dvector![1.0, 1.0],
        },
    )
    .unwrap();
    let u = ControlSignal::constant(dvector![0.0, 0.0], 1.0);
    (sys, u, dvector![0.0])
}

/// `x' = u` on `[0, 4]` with the two-point value set `{0, 1}`; the bang
/// control 1 on `[0, π)`, 0 after reaches π.
pub fn commensurability_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        1,
        1,
        4.0,
        dvector![0.0],
        Dynamics::LinearAutonomous {
            a: DMatrix::zeros(1, 1),
            b: DMatrix::identity(1, 1),
            drift: DVector::zeros(1),
        },
        ConstraintSet::FiniteSet {
            points: vec![dvector![0.0], dvector![1.0]],
        },
    )
    .unwrap();
    let part = Partition::new(vec![0.0, PI, 4.0]).unwrap();
    let u = ControlSignal::piecewise_constant(part, vec![dvector![1.0], dvector![0.0]]).unwrap();
    (sys, u, dvector![PI])
}

/// Double integrator on `[0, 18]` with `U = [-1, 1]`, steering `(78, 0)` to
/// `(0, 0)` with the three-phase control `-1` / ramp `(t-9)/3` / `+1`.
pub fn double_integrator_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        2,
        1,
        18.0,
        dvector![78.0, 0.0],
        Dynamics::LinearAutonomous {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            drift: DVector::zeros(2),
        },
        ConstraintSet::interval(-1.0, 1.0),
    )
    .unwrap();
    // linear hold between the nodes reproduces the ramp exactly
    let u = ControlSignal::GridSampled {
        times: vec![0.0, 6.0, 12.0, 18.0],
        values: vec![dvector![-1.0], dvector![-1.0], dvector![1.0], dvector![1.0]],
        hold: Hold::Linear,
    };
    (sys, u, dvector![0.0, 0.0])
}

/// `x' = (u, u²)` on `[0, 4]` with `U = [0, 1]`: endpoints on the diagonal
/// force `{0, 1}` values, reproducing the commensurability obstruction at
/// target `(π, π)`.
pub fn diagonal_pair_system() -> (ControlSystem, ControlSignal, DVector<f64>) {
    let sys = ControlSystem::new(
        2,
        1,
        4.0,
        dvector![0.0, 0.0],
        Dynamics::Expressions(vec![
            expr::parse("u1", 2, 1).unwrap(),
            expr::parse("u1^2", 2, 1).unwrap(),
        ]),
        ConstraintSet::interval(0.0, 1.0),
    )
    .unwrap();
    let part = Partition::new(vec![0.0, PI, 4.0]).unwrap();
    let u = ControlSignal::piecewise_constant(part, vec![dvector![1.0], dvector![0.0]]).unwrap();
    (sys, u, dvector![PI, PI])
}

/// The oscillating bang control equal to 1 on `(1/(k+1), 1/k]` for even `k`
/// and 0 for odd `k`, truncated at `k = depth`.
pub fn oscillating_control(depth: usize) -> ControlSignal {
    let mut times = vec![0.0];
    let mut values: Vec<DVector<f64>> = Vec::new();
    // first piece covers [0, 1/depth]; parity of its k matches depth
    for k in (1..=depth).rev() {
        let upper = 1.0 / k as f64;
        // piece (1/(k+1), 1/k] has the parity of k
        values.push(dvector![if k % 2 == 0 { 1.0 } else { 0.0 }]);
        if k > 1 {
            times.push(upper);
        }
    }
    times.push(1.0);
    let part = Partition::new(times).unwrap();
    ControlSignal::piecewise_constant(part, values).unwrap()
}
