//! Needle-like variations: single needles, multiple-needle packages, strong
//! variation vectors and the package Jacobian.
//!
//! A needle replaces the control by a value `ω ∈ U` on a short interval
//! `[τ, τ + α)`. Its first-order endpoint effect is the strong variation
//! vector: the homogeneous variational transport to `T` of the jump
//! `f(x_u(τ), ω, τ) − f(x_u(τ), u(τ), τ)`. A package stacks several values
//! at several base times; the map `ᾱ ↦ E(u^ᾱ_χ)` is differentiable at zero
//! with the strong variation vectors as partial derivatives, which is what
//! the fixed-point synthesizer inverts.

use crate::ode::{self, OdeError, Trajectory};
use crate::system::{ConstraintSet, ControlSignal, ControlSystem, Patch, SystemError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum NeedleError {
    #[error("needle interval [{tau}, {end}) exceeds the horizon {horizon}")]
    PastHorizon { tau: f64, end: f64, horizon: f64 },
    #[error("needle value is outside the constraint set (distance {distance})")]
    ValueOutsideConstraint { distance: f64 },
    #[error("package times must be strictly increasing in [0, T)")]
    BadTimes,
    #[error("amplitudes exceed the package box bound {beta}")]
    AmplitudeOutsideBox { beta: f64 },
    #[error("needle intervals overlap at time {t}")]
    Overlap { t: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Replaces `u` by `omega` on `[tau, tau + alpha)`.
pub fn single_needle(
    u: &ControlSignal,
    constraint: &ConstraintSet,
    horizon: f64,
    tau: f64,
    omega: DVector<f64>,
    alpha: f64,
) -> Result<ControlSignal, NeedleError> {
    if tau < 0.0 || tau + alpha > horizon {
        return Err(NeedleError::PastHorizon {
            tau,
            end: tau + alpha,
            horizon,
        });
    }
    let d = constraint.distance(&omega);
    if d > 1e-9 {
        return Err(NeedleError::ValueOutsideConstraint { distance: d });
    }
    Ok(ControlSignal::Spliced {
        base: Box::new(u.clone()),
        patches: vec![Patch {
            start: tau,
            end: tau + alpha,
            value: omega,
        }],
    })
}

/// Endpoint effect of an infinitesimal needle at `(tau, omega)`:
/// integrates the homogeneous variational equation from `tau` with the jump
/// initial condition.
pub fn strong_variation_vector(
    sys: &ControlSystem,
    u: &ControlSignal,
    base: &Trajectory,
    tau: f64,
    omega: &DVector<f64>,
    steps_per_unit: usize,
) -> Result<DVector<f64>, OdeError> {
    let x_tau = base.eval(tau);
    let u_tau = u.eval(tau);
    let f_omega = sys.dynamics.eval(&x_tau, omega, tau)?;
    let f_u = sys.dynamics.eval(&x_tau, &u_tau, tau)?;
    let jump = f_omega - f_u;
    let zero = ControlSignal::constant(DVector::zeros(sys.m), sys.horizon);
    ode::integrate_variational(sys, u, base, &zero, tau, jump, steps_per_unit)
}

/// The `(τ̄, ω̄)` data of a multiple needle-like variation, with the
/// amplitude box bound `beta` keeping inserted intervals disjoint.
#[derive(Clone, Debug)]
pub struct NeedlePackage {
    /// Strictly increasing base times in `[0, T)`.
    pub taus: Vec<f64>,
    /// `omegas[q]` lists the values stacked at `taus[q]`, in insertion order.
    pub omegas: Vec<Vec<DVector<f64>>>,
    /// Componentwise bound on every amplitude.
    pub beta: f64,
}

impl NeedlePackage {
    /// Validates ordering, membership of every value and the box bound
    /// `τ_q + R_q β ≤ τ_{q+1}` (and `≤ T` for the last entry).
    pub fn new(
        taus: Vec<f64>,
        omegas: Vec<Vec<DVector<f64>>>,
        beta: f64,
        constraint: &ConstraintSet,
        horizon: f64,
    ) -> Result<Self, NeedleError> {
        if taus.is_empty()
            || taus.len() != omegas.len()
            || omegas.iter().any(|o| o.is_empty())
            || taus[0] < 0.0
            || taus.windows(2).any(|w| w[1] <= w[0])
            || *taus.last().unwrap() >= horizon
        {
            return Err(NeedleError::BadTimes);
        }
        for stack in &omegas {
            for w in stack {
                let d = constraint.distance(w);
                if d > 1e-9 {
                    return Err(NeedleError::ValueOutsideConstraint { distance: d });
                }
            }
        }
        for q in 0..taus.len() {
            let reach = taus[q] + omegas[q].len() as f64 * beta;
            let limit = if q + 1 < taus.len() {
                taus[q + 1]
            } else {
                horizon
            };
            if reach > limit {
                return Err(NeedleError::Overlap { t: limit });
            }
        }
        Ok(NeedlePackage { taus, omegas, beta })
    }

    /// Total number of needles `R = Σ R_q`.
    pub fn total_needles(&self) -> usize {
        self.omegas.iter().map(Vec::len).sum()
    }

    /// Flattened `(q, r)` index pairs in lexicographic column order.
    pub fn column_index(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.total_needles());
        for (q, stack) in self.omegas.iter().enumerate() {
            for r in 0..stack.len() {
                out.push((q, r));
            }
        }
        out
    }
}

/// Nonnegative needle amplitudes, flattened lexicographically in `(q, r)`.
#[derive(Clone, Debug)]
pub struct Amplitudes(pub DVector<f64>);

impl Amplitudes {
    pub fn zeros(r: usize) -> Self {
        Amplitudes(DVector::zeros(r))
    }
}

/// The multiple needle-like variation `u^ᾱ_χ`: value `ω^r_q` on
/// `[τ_q + Σ_{ℓ<r} α^ℓ_q, τ_q + Σ_{ℓ≤r} α^ℓ_q)`, `u` elsewhere.
pub fn apply_package(
    u: &ControlSignal,
    chi: &NeedlePackage,
    alpha: &Amplitudes,
) -> Result<ControlSignal, NeedleError> {
    let r_total = chi.total_needles();
    if alpha.0.len() != r_total {
        return Err(NeedleError::BadTimes);
    }
    if alpha.0.iter().any(|&a| a < 0.0 || a > chi.beta + 1e-15) {
        return Err(NeedleError::AmplitudeOutsideBox { beta: chi.beta });
    }
    let mut patches = Vec::new();
    let mut flat = 0usize;
    let mut prev_end = f64::NEG_INFINITY;
    for (q, stack) in chi.omegas.iter().enumerate() {
        let mut cursor = chi.taus[q];
        if cursor < prev_end {
            return Err(NeedleError::Overlap { t: cursor });
        }
        for omega in stack {
            let a = alpha.0[flat];
            flat += 1;
            if a > 0.0 {
                patches.push(Patch {
                    start: cursor,
                    end: cursor + a,
                    value: omega.clone(),
                });
                cursor += a;
            }
        }
        prev_end = cursor;
    }
    Ok(ControlSignal::Spliced {
        base: Box::new(u.clone()),
        patches,
    })
}

/// Jacobian at `ᾱ = 0` of the package map `Ψ(ᾱ) = E(u^ᾱ_χ)`: column
/// `(q, r)` (lexicographic order) is the strong variation vector at
/// `(τ_q, ω^r_q)`.
pub fn package_jacobian(
    sys: &ControlSystem,
    u: &ControlSignal,
    base: &Trajectory,
    chi: &NeedlePackage,
    steps_per_unit: usize,
) -> Result<DMatrix<f64>, OdeError> {
    let r_total = chi.total_needles();
    let mut jac = DMatrix::zeros(sys.n, r_total);
    let mut col = 0usize;
    for (q, stack) in chi.omegas.iter().enumerate() {
        for omega in stack {
            let w = strong_variation_vector(sys, u, base, chi.taus[q], omega, steps_per_unit)?;
            jac.set_column(col, &w);
            col += 1;
        }
    }
    Ok(jac)
}

/// Jacobian of the package map at arbitrary amplitudes. Raising `α^r_q`
/// widens needle `(q, r)` at its right edge and shifts the rest of the
/// stack, so the partial derivative is the sum over the affected edges of
/// the transported value jumps:
///
/// ```text
/// ∂Ψ/∂α^r_q = Σ_{ℓ ≥ r} transport_{e_ℓ → T}[ f(x(e_ℓ), ω^ℓ_q) − f(x(e_ℓ), after(e_ℓ)) ]
/// ```
///
/// with `e_ℓ = τ_q + Σ_{j ≤ ℓ} α^j_q`, empty needles (`α^ℓ_q = 0`, `ℓ > r`)
/// contributing nothing. At `ᾱ = 0` the sum telescopes to the strong
/// variation vector, so this coincides with [`package_jacobian`] there.
pub fn package_jacobian_at(
    sys: &ControlSystem,
    u: &ControlSignal,
    chi: &NeedlePackage,
    alpha: &Amplitudes,
    steps_per_unit: usize,
) -> Result<DMatrix<f64>, NeedleError> {
    let varied = apply_package(u, chi, alpha)?;
    let traj = ode::integrate_state(sys, &varied, steps_per_unit)?;
    let zero = ControlSignal::constant(DVector::zeros(sys.m), sys.horizon);
    let r_total = chi.total_needles();
    let mut jac = DMatrix::zeros(sys.n, r_total);
    let mut flat_base = 0usize;
    for (q, stack) in chi.omegas.iter().enumerate() {
        // transported edge terms of this stack
        let mut edge = chi.taus[q];
        let mut terms: Vec<DVector<f64>> = Vec::with_capacity(stack.len());
        let mut edges: Vec<f64> = Vec::with_capacity(stack.len());
        for (l, omega) in stack.iter().enumerate() {
            edge += alpha.0[flat_base + l];
            edges.push(edge);
            let x_edge = traj.eval(edge);
            let after = varied.eval(edge);
            let jump = sys.dynamics.eval(&x_edge, omega, edge)?
                - sys.dynamics.eval(&x_edge, &after, edge)?;
            let w = if jump.amax() == 0.0 {
                DVector::zeros(sys.n)
            } else {
                ode::integrate_variational(sys, &varied, &traj, &zero, edge, jump, steps_per_unit)?
            };
            terms.push(w);
        }
        for r in 0..stack.len() {
            let mut col = terms[r].clone();
            for (l, term) in terms.iter().enumerate().skip(r + 1) {
                if alpha.0[flat_base + l] > 0.0 {
                    col += term;
                }
            }
            jac.set_column(flat_base + r, &col);
        }
        flat_base += stack.len();
    }
    Ok(jac)
}

/// Finite-difference probe of the package Jacobian along a fixed amplitude
/// direction: quotients `(E(u^{α·dir}_χ) − E(u)) / α` against
/// `Jacobian · dir`.
#[derive(Clone, Debug)]
pub struct PackageSlopeReport {
    pub alphas: Vec<f64>,
    pub quotients: Vec<Option<DVector<f64>>>,
    pub deviations: Vec<Option<f64>>,
    pub reference: DVector<f64>,
}

pub fn fd_check_package(
    sys: &ControlSystem,
    u: &ControlSignal,
    chi: &NeedlePackage,
    direction: &Amplitudes,
    alphas: &[f64],
    steps_per_unit: usize,
) -> Result<PackageSlopeReport, NeedleError> {
    let base = ode::integrate_state(sys, u, steps_per_unit)?;
    let e_base = base.final_state().clone();
    let jac = package_jacobian(sys, u, &base, chi, steps_per_unit)?;
    let reference = &jac * &direction.0;
    let mut quotients = Vec::with_capacity(alphas.len());
    let mut deviations = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let scaled = Amplitudes(&direction.0 * alpha);
        let varied = apply_package(u, chi, &scaled)?;
        match ode::integrate_state(sys, &varied, steps_per_unit) {
            Ok(traj) => {
                let q = (traj.final_state() - &e_base) / alpha;
                deviations.push(Some((&q - &reference).norm()));
                quotients.push(Some(q));
            }
            Err(OdeError::BlowUp { .. }) => {
                quotients.push(None);
                deviations.push(None);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(PackageSlopeReport {
        alphas: alphas.to_vec(),
        quotients,
        deviations,
        reference,
    })
}
