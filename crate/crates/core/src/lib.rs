//! Numerical toolkit for reachability of nonlinear control systems under
//! control sampling.
//!
//! Given a control system `x'(t) = f(x(t), u(t), t)` with control values
//! constrained to a set `U`, this crate
//!
//! * classifies controls as strongly regular, strongly U-regular or weakly
//!   U-regular via rank and conic spanning tests on variation vectors, with
//!   Hamiltonian-lift residuals certifying the singular complements;
//! * synthesizes piecewise-constant (sampled-data) controls reaching the
//!   same fixed-time endpoint as a given permanent control, by conic
//!   perturbation with truncated dynamics or by a needle-package fixed-point
//!   iteration;
//! * estimates the partition-norm threshold below which sampled reachability
//!   holds, and probes its sensitivity to partition perturbations.
//!
//! Everything is deterministic: integrators are fixed-step RK4 and all
//! randomized sampling takes an explicit seed.

pub mod averaging;
pub mod config;
pub mod endpoint;
pub mod expr;
pub mod needle;
pub mod nnls;
pub mod ode;
pub mod regularity;
pub mod synthesis;
pub mod system;

pub use system::{ConstraintSet, ControlSignal, ControlSystem, Dynamics, Partition};

/// Default integration resolution; acceptance tolerances are quoted at this
/// value.
pub const DEFAULT_STEPS_PER_UNIT: usize = 1000;
