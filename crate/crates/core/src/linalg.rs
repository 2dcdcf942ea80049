//! Small numerical helpers shared across modules.

use nalgebra::DMatrix;

use crate::error::{DesignError, Result};

/// Relative threshold on the diagonal of `R` below which a column is treated
/// as linearly dependent on the previous ones.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Thin QR factorization that refuses rank-deficient inputs.
///
/// Returns `(Q, R)` with `Q` n×p having orthonormal columns.
pub(crate) fn full_rank_qr(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, p) = a.shape();
    if p == 0 || n < p {
        return Err(DesignError::SingularDesignMatrix);
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let col_scale = a.column_iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= RANK_TOL * col_scale.max(scale)) {
        return Err(DesignError::SingularDesignMatrix);
    }
    Ok((qr.q(), r))
}

/// Inverse of an upper-triangular matrix with nonzero diagonal.
pub(crate) fn upper_triangular_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = r.nrows();
    r.solve_upper_triangular(&DMatrix::identity(p, p)).ok_or(DesignError::SingularDesignMatrix)
}

/// `I - X (XᵀX)⁻¹ Xᵀ`, the projection onto the orthogonal complement of the
/// column space of `x`.
pub(crate) fn projection_complement(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, _) = full_rank_qr(x)?;
    let n = x.nrows();
    let mut m = DMatrix::identity(n, n) - &q * q.transpose();
    // exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    Ok(m)
}
