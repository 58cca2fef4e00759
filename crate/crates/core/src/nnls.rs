//! Nonnegative least squares by the Lawson–Hanson active-set method.
//!
//! Solves `min ‖A x − b‖₂` subject to `x ≥ 0`. Used for conic spanning
//! tests (does the cone generated by sample columns contain a target?) and
//! as the weight extractor for synthesis, so the solution vector matters as
//! much as the residual.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `‖A x − b‖₂` at the solution.
    pub residual: f64,
    pub iterations: usize,
}

/// Least-squares solve restricted to the passive column set, by SVD.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let m = a.nrows();
    let mut sub = DMatrix::zeros(m, passive.len());
    for (k, &j) in passive.iter().enumerate() {
        sub.set_column(k, &a.column(j));
    }
    let svd = sub.svd(true, true);
    svd.solve(b, 1e-13).expect("svd solve")
}

/// Lawson–Hanson NNLS. `tol` is the dual-feasibility threshold on the
/// negative gradient; columns whose dual value stays below it remain at zero.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    let max_iter = 3 * n.max(10);
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > max_iter || active.is_empty() {
            break;
        }
        // dual vector w = Aᵀ (b - A x)
        let resid = b - a * &x;
        let w = a.transpose() * &resid;
        let mut best: Option<(usize, f64)> = None;
        for (k, &j) in active.iter().enumerate() {
            if w[j] > tol && best.map(|(_, v)| w[j] > v).unwrap_or(true) {
                best = Some((k, w[j]));
            }
        }
        let Some((k_active, _)) = best else { break };
        let j_new = active.remove(k_active);
        passive.push(j_new);

        // inner loop: restore primal feasibility on the passive set
        loop {
            let z = solve_passive(a, b, &passive);
            if z.iter().all(|&v| v > 0.0) {
                for (k, &j) in passive.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            // step toward z until the first passive coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (k, &j) in passive.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = x[j] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in passive.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
            }
            // drop passive coordinates pinned at zero
            let mut k = 0;
            while k < passive.len() {
                let j = passive[k];
                if x[j].abs() <= 1e-14 {
                    x[j] = 0.0;
                    passive.remove(k);
                    active.push(j);
                } else {
                    k += 1;
                }
            }
            if passive.is_empty() {
                break;
            }
            iterations += 1;
            if iterations > max_iter {
                break;
            }
        }
    }

    let residual = (b - a * &x).norm();
    NnlsSolution {
        x,
        residual,
        iterations,
    }
}
