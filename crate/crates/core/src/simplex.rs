//! Least squares over the unit simplex, `min_u ‖z̄ - Σ u_j z_j‖²`.
//!
//! Solved with Wolfe's minimum-norm-point method, a fully corrective
//! conditional-gradient scheme: each major step adds the Frank-Wolfe vertex
//! and re-optimizes exactly over the affine hull of the active set. Work is
//! done on the Gram matrix of the shifted columns `p_j = z_j - z̄`, so the
//! cost per step does not depend on the column length.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, DesignError, Result};

/// Stop once the Frank-Wolfe duality gap falls below this (scaled by
/// `max(1, max_j ‖p_j‖²)`).
pub const GAP_TOL: f64 = 1e-10;
/// Hard cap on major plus minor iterations.
pub const MAX_ITERATIONS: usize = 50_000;
/// Active weights at or below this are dropped.
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexFit {
    /// One weight per column, on the unit simplex.
    pub weights: Vec<f64>,
    /// `‖z̄ - Σ u_j z_j‖²` at the returned weights.
    pub loss: f64,
    pub iterations: usize,
    /// Final Frank-Wolfe duality gap.
    pub gap: f64,
    pub converged: bool,
    /// Objective after each major step; non-increasing.
    pub objective_trace: Vec<f64>,
}

/// Minimizes `λᵀ G λ` over the simplex restricted to `cols`, where `G` is
/// the Gram matrix of the shifted columns. Returned weights are indexed
/// like `cols`.
pub(crate) fn solve_gram(gram: &DMatrix<f64>, cols: &[usize]) -> SimplexFit {
    let m = cols.len();
    debug_assert!(m > 0);
    let g = |a: usize, b: usize| gram[(cols[a], cols[b])];
    let scale = (0..m).map(|a| g(a, a)).fold(1.0_f64, f64::max);
    let objective = |active: &[usize], lam: &[f64]| {
        let mut acc = 0.0;
        for (i, &a) in active.iter().enumerate() {
            for (j, &b) in active.iter().enumerate() {
                acc += lam[i] * lam[j] * g(a, b);
            }
        }
        acc.max(0.0)
    };

    // start at the column nearest the target, lowest index on ties
    let start = (0..m).fold(0, |best, a| if g(a, a) < g(best, best) { a } else { best });
    let mut active = vec![start];
    let mut lam = vec![1.0];
    let mut trace = vec![g(start, start)];
    let mut iterations = 0;
    let mut gap;
    let mut converged = false;

    loop {
        // ⟨x, p_b⟩ for every candidate, with x = Σ λ_a p_a
        let inner: Vec<f64> = (0..m).map(|b| active.iter().zip(&lam).map(|(&a, l)| l * g(a, b)).sum()).collect();
        let xx: f64 = active.iter().zip(&lam).map(|(&a, l)| l * inner[a]).sum();
        let vertex = (0..m).fold(0, |best, b| if inner[b] < inner[best] { b } else { best });
        gap = (2.0 * (xx - inner[vertex])).max(0.0);
        if gap <= GAP_TOL * scale {
            converged = true;
            break;
        }
        if active.contains(&vertex) || iterations >= MAX_ITERATIONS {
            break;
        }
        active.push(vertex);
        lam.push(0.0);

        // minor cycles: move toward the affine minimizer until it is interior
        loop {
            iterations += 1;
            let alpha = affine_minimizer(&active, &g);
            if alpha.iter().all(|&a| a > DROP_TOL) {
                lam = alpha;
                break;
            }
            let mut theta = 1.0_f64;
            for (l, a) in lam.iter().zip(&alpha) {
                if *a <= DROP_TOL && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lam.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let keep: Vec<bool> = lam.iter().map(|&l| l > DROP_TOL).collect();
            if keep.iter().all(|&k| k) {
                // the line search did not hit a face; drop the smallest weight
                let (i, _) =
                    lam.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &l)| if l < b.1 { (i, l) } else { b });
                active.remove(i);
                lam.remove(i);
            } else {
                let mut idx = 0;
                active.retain(|_| {
                    idx += 1;
                    keep[idx - 1]
                });
                lam.retain(|&l| l > DROP_TOL);
            }
            let total: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= total);
            if active.len() == 1 || iterations >= MAX_ITERATIONS {
                break;
            }
        }

        let obj = objective(&active, &lam);
        let prev = *trace.last().expect("trace starts non-empty");
        if obj > prev {
            // numerical stall: keep the monotone record and stop
            trace.push(prev);
            break;
        }
        trace.push(obj);
    }

    let mut weights = vec![0.0; m];
    for (&a, &l) in active.iter().zip(&lam) {
        weights[a] = l;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let loss = objective(&(0..m).collect::<Vec<_>>(), &weights);
    SimplexFit { weights, loss, iterations, gap, converged, objective_trace: trace }
}

/// `argmin_{Σα = 1} ‖Σ α_i p_i‖²` over the active points.
fn affine_minimizer(active: &[usize], g: &impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let s = active.len();
    let gm = DMatrix::from_fn(s, s, |i, j| g(active[i], active[j]));
    let ones = DVector::from_element(s, 1.0);
    if let Some(ch) = gm.clone().cholesky() {
        let a = ch.solve(&ones);
        let total = a.sum();
        if total.is_finite() && total > 0.0 && a.iter().all(|v| v.is_finite()) {
            let cond_ok = ch.l().diagonal().iter().all(|d| d * d > 1e-13 * gm.diagonal().max().max(1e-300));
            if cond_ok {
                return (a / total).iter().copied().collect();
            }
        }
    }
    // affinely dependent points: minimum-norm solution of the bordered system
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    kkt.view_mut((0, 0), (s, s)).copy_from(&gm);
    for i in 0..s {
        kkt[(i, s)] = 1.0;
        kkt[(s, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let svd = kkt.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    match svd.solve(&rhs, tol) {
        Ok(sol) => sol.rows(0, s).iter().copied().collect(),
        Err(_) => vec![1.0 / s as f64; s],
    }
}

/// Gram matrix of `p_j = z_j - target`.
pub(crate) fn shifted_gram(columns: &[DVector<f64>], target: &DVector<f64>) -> DMatrix<f64> {
    let shifted: Vec<DVector<f64>> = columns.iter().map(|z| z - target).collect();
    let m = shifted.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = shifted[i].dot(&shifted[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    gram
}

/// Squared distance from `target` to `Σ w_j columns_j`.
pub(crate) fn direct_loss(columns: &[DVector<f64>], cols: &[usize], weights: &[f64], target: &DVector<f64>) -> f64 {
    let mut combo = DVector::zeros(target.len());
    for (&c, &w) in cols.iter().zip(weights) {
        if w != 0.0 {
            combo.axpy(w, &columns[c], 1.0);
        }
    }
    (combo - target).norm_squared()
}

/// Simplex weights minimizing `‖target - Σ u_j columns_j‖²`.
pub fn simplex_least_squares(columns: &[DVector<f64>], target: &DVector<f64>) -> Result<SimplexFit> {
    if columns.is_empty() {
        return Err(DesignError::InvalidParameter("simplex least squares needs at least one column".into()));
    }
    for c in columns {
        ensure_len(target.len(), c.len())?;
        ensure_finite(c.as_slice(), "columns")?;
    }
    ensure_finite(target.as_slice(), "target")?;
    let gram = shifted_gram(columns, target);
    let cols: Vec<usize> = (0..columns.len()).collect();
    let mut fit = solve_gram(&gram, &cols);
    fit.loss = direct_loss(columns, &cols, &fit.weights, target);
    Ok(fit)
}
