//! Treatment-effect estimators: difference in means, inverse propensity
//! weighting, the stratified aggregate, OLS, and the synthetic-control
//! contrast.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, ensure_len, DesignError, Result};
use crate::linalg::{full_rank_qr, neumaier_sum, upper_triangular_inverse};
use crate::types::{Assignment, CovariateMatrix, DesignSpec, ScienceTable, StrataPartition};

/// Tolerance for simplex membership of synthetic-control weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Outcomes observed after running a design.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedExperiment {
    pub y_obs: Vec<f64>,
    pub w: Assignment,
    pub design: DesignSpec,
}

impl ObservedExperiment {
    pub fn new(y_obs: Vec<f64>, w: Assignment, design: DesignSpec) -> Result<Self> {
        ensure_len(y_obs.len(), w.len())?;
        ensure_len(design.n(), w.len())?;
        ensure_finite(&y_obs, "observed outcomes")?;
        design.validate()?;
        Ok(Self { y_obs, w, design })
    }

    /// Reveals `Y_j(w_j)` from a science table.
    pub fn from_table(t: &ScienceTable, w: Assignment, design: DesignSpec) -> Result<Self> {
        let y = t.observed(&w)?;
        Self::new(y, w, design)
    }

    pub fn dm(&self) -> Result<f64> {
        dm_estimate(&self.y_obs, &self.w)
    }

    /// IPW with the design's own marginal propensities.
    pub fn ipw(&self) -> Result<f64> {
        ipw_estimate(&self.y_obs, &self.w, &self.design.marginal_propensities())
    }
}

/// Mean of treated outcomes minus mean of control outcomes.
pub fn dm_estimate(y_obs: &[f64], w: &Assignment) -> Result<f64> {
    ensure_len(w.len(), y_obs.len())?;
    let n1 = w.n1();
    let n0 = w.n0();
    if n1 == 0 || n0 == 0 {
        return Err(DesignError::DegenerateAssignment);
    }
    let treated = neumaier_sum(y_obs.iter().zip(w.iter()).filter(|(_, t)| *t).map(|(y, _)| *y));
    let control = neumaier_sum(y_obs.iter().zip(w.iter()).filter(|(_, t)| !*t).map(|(y, _)| *y));
    Ok(treated / n1 as f64 - control / n0 as f64)
}

/// `(1/n) Σ y_j w_j / e_j - (1/n) Σ y_j (1 - w_j) / (1 - e_j)`.
pub fn ipw_estimate(y_obs: &[f64], w: &Assignment, propensities: &[f64]) -> Result<f64> {
    ensure_len(w.len(), y_obs.len())?;
    ensure_len(w.len(), propensities.len())?;
    if let Some((j, &e)) = propensities.iter().enumerate().find(|(_, &e)| !(e > 0.0 && e < 1.0)) {
        return Err(DesignError::PositivityViolated { unit: j + 1, value: e });
    }
    let n = w.len() as f64;
    let terms =
        y_obs.iter().zip(w.iter()).zip(propensities).map(|((&y, t), &e)| if t { y / e } else { -y / (1.0 - e) });
    Ok(neumaier_sum(terms) / n)
}

/// `Σ_l (s_l / n) · τ̂_DM(S_l)`.
pub fn aggregate_estimate(y_obs: &[f64], w: &Assignment, p: &StrataPartition) -> Result<f64> {
    ensure_len(p.n(), w.len())?;
    ensure_len(p.n(), y_obs.len())?;
    let n = p.n() as f64;
    let mut total = Vec::with_capacity(p.len());
    for (l, s) in p.strata().iter().enumerate() {
        let ws = w.restrict(s);
        let ys: Vec<f64> = s.iter().map(|&j| y_obs[j]).collect();
        let dm = dm_estimate(&ys, &ws).map_err(|_| DesignError::DegenerateStratum { stratum: l + 1 })?;
        total.push(s.len() as f64 / n * dm);
    }
    Ok(neumaier_sum(total))
}

/// Least-squares fit of `y = τ w + x β + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// `(τ̂, β̂)`.
    pub theta_hat: DVector<f64>,
    /// `σ² (ZᵀZ)⁻¹` with the caller-supplied σ².
    pub covariance: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub sigma2: f64,
}

impl OlsFit {
    pub fn tau_hat(&self) -> f64 {
        self.theta_hat[0]
    }

    pub fn beta_hat(&self) -> DVector<f64> {
        self.theta_hat.rows(1, self.theta_hat.len() - 1).into_owned()
    }

    /// Residual-based noise estimate `‖r‖² / (n - d - 1)`; not the model σ².
    pub fn residual_variance_estimate(&self) -> Option<f64> {
        let dof = self.residuals.len().checked_sub(self.theta_hat.len())?;
        (dof > 0).then(|| self.residuals.norm_squared() / dof as f64)
    }
}

pub(crate) fn design_matrix(w: &Assignment, x: &CovariateMatrix) -> Result<DMatrix<f64>> {
    ensure_len(x.n(), w.len())?;
    let n = x.n();
    let mut z = DMatrix::zeros(n, x.d() + 1);
    z.column_mut(0).copy_from_slice(&w.to_f64());
    z.view_mut((0, 1), (n, x.d())).copy_from(x.matrix());
    Ok(z)
}

/// OLS via a Householder QR factorization of `Z = [w | x]`.
pub fn ols_fit(w: &Assignment, x: &CovariateMatrix, y_obs: &[f64], sigma2: f64) -> Result<OlsFit> {
    ensure_len(w.len(), y_obs.len())?;
    ensure_finite(y_obs, "observed outcomes")?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(DesignError::InvalidParameter(format!("noise variance must be finite and >= 0, got {sigma2}")));
    }
    let z = design_matrix(w, x)?;
    let (q, r) = full_rank_qr(&z)?;
    let y = DVector::from_column_slice(y_obs);
    let qty = q.transpose() * &y;
    let theta_hat = r.solve_upper_triangular(&qty).ok_or(DesignError::SingularDesignMatrix)?;
    let residuals = &y - &z * &theta_hat;
    let r_inv = upper_triangular_inverse(&r)?;
    let mut covariance = &r_inv * r_inv.transpose() * sigma2;
    let p = covariance.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let s = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = s;
            covariance[(j, i)] = s;
        }
    }
    Ok(OlsFit { theta_hat, covariance, residuals, sigma2 })
}

/// `σ² / (wᵀw - wᵀx(xᵀx)⁻¹xᵀw)`, the variance of the OLS treatment
/// coefficient, computed with the bordering identity.
pub fn var_tau_ols(w: &Assignment, x: &CovariateMatrix, sigma2: f64) -> Result<f64> {
    ensure_len(x.n(), w.len())?;
    let (q, _) = full_rank_qr(x.matrix())?;
    let wv = DVector::from_vec(w.to_f64());
    let resid = &wv - &q * (q.transpose() * &wv);
    let denom = resid.norm_squared();
    if denom <= 1e-12 * wv.norm_squared().max(1.0) {
        return Err(DesignError::CollinearTreatment);
    }
    Ok(sigma2 / denom)
}

/// `Σ u_j Y_jt - Σ v_j Y_jt` for simplex weights with disjoint supports.
pub fn sc_estimate(outcomes_t: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    ensure_len(outcomes_t.len(), u.len())?;
    ensure_len(outcomes_t.len(), v.len())?;
    check_simplex(u, "u")?;
    check_simplex(v, "v")?;
    if let Some(j) = (0..u.len()).find(|&j| u[j] > 0.0 && v[j] > 0.0) {
        return Err(DesignError::OverlappingSupport { unit: j + 1 });
    }
    let treated = neumaier_sum(u.iter().zip(outcomes_t).map(|(a, y)| a * y));
    let control = neumaier_sum(v.iter().zip(outcomes_t).map(|(a, y)| a * y));
    Ok(treated - control)
}

pub(crate) fn check_simplex(x: &[f64], what: &'static str) -> Result<()> {
    if let Some((j, &v)) = x.iter().enumerate().find(|(_, &v)| v < -SIMPLEX_TOL || !v.is_finite()) {
        return Err(DesignError::SimplexViolation { what, detail: format!("entry {} is {}", j + 1, v) });
    }
    let sum = neumaier_sum(x.iter().copied());
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(DesignError::SimplexViolation { what, detail: format!("weights sum to {sum}") });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn bits(b: &[u8]) -> Assignment {
        Assignment::from_bits(b).unwrap()
    }

    fn counts(
        treated_smokers: usize,
        treated: usize,
        control_smokers: usize,
        control: usize,
    ) -> (Vec<f64>, Assignment) {
        let mut y = Vec::new();
        let mut w = Vec::new();
        for i in 0..treated {
            y.push(if i < treated_smokers { 1.0 } else { 0.0 });
            w.push(true);
        }
        for i in 0..control {
            y.push(if i < control_smokers { 1.0 } else { 0.0 });
            w.push(false);
        }
        (y, Assignment::new(w))
    }

    #[test]
    fn dm_examples() {
        assert_eq!(dm_estimate(&[5.0, 3.0], &bits(&[1, 0])).unwrap(), 2.0);
        // Geneva: 350 of 931 treated smoke, 1979 of 4257 controls
        let (y, w) = counts(350, 931, 1979, 4257);
        let dm = dm_estimate(&y, &w).unwrap();
        assert!((dm - (350.0 / 931.0 - 1979.0 / 4257.0)).abs() < 1e-12);
        assert!((dm - (0.3759 - 0.4649)).abs() < 5e-4);
        let (y, w) = counts(355, 1088, 2101, 6741);
        assert!((dm_estimate(&y, &w).unwrap() - (0.3263 - 0.3117)).abs() < 5e-4);
    }

    #[test]
    fn dm_degenerate_is_an_error() {
        assert_eq!(dm_estimate(&[1.0, 2.0], &bits(&[1, 1])), Err(DesignError::DegenerateAssignment));
        assert_eq!(dm_estimate(&[1.0, 2.0], &bits(&[0, 0])), Err(DesignError::DegenerateAssignment));
    }

    #[test]
    fn ipw_examples() {
        assert_eq!(ipw_estimate(&[1.0, 1.0], &bits(&[1, 0]), &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(ipw_estimate(&[2.0], &bits(&[1]), &[0.5]).unwrap(), 4.0);
        assert_eq!(
            ipw_estimate(&[2.0, 1.0], &bits(&[1, 0]), &[0.5, 1.0]),
            Err(DesignError::PositivityViolated { unit: 2, value: 1.0 })
        );
        assert!(ipw_estimate(&[2.0], &bits(&[1]), &[0.0]).is_err());
    }

    #[test]
    fn ipw_equals_dm_under_crd() {
        let mut rng = stream(21, 0);
        for _ in 0..200 {
            let n = rng.random_range(2..15usize);
            let n1 = rng.random_range(1..n);
            let d = DesignSpec::crd(n, n1).unwrap();
            let w = crate::designs::sample_assignment(&d, &mut rng);
            let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
            let e = d.marginal_propensities();
            let dm = dm_estimate(&y, &w).unwrap();
            let ipw = ipw_estimate(&y, &w, &e).unwrap();
            assert!((dm - ipw).abs() <= 1e-12 * (1.0 + dm.abs()), "{dm} vs {ipw}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let (yg, wg) = counts(350, 931, 1979, 4257);
        let (yp, wp) = counts(5, 157, 122, 2484);
        let ng = yg.len();
        let n = ng + yp.len();
        let y: Vec<f64> = yg.iter().chain(&yp).copied().collect();
        let w = Assignment::new(wg.iter().chain(wp.iter()).collect());
        let part = StrataPartition::new(n, vec![(0..ng).collect(), (ng..n).collect()]).unwrap();
        let agg = aggregate_estimate(&y, &w, &part).unwrap();
        let exact = ng as f64 / n as f64 * (350.0 / 931.0 - 1979.0 / 4257.0)
            + (n - ng) as f64 / n as f64 * (5.0 / 157.0 - 122.0 / 2484.0);
        assert!((agg - exact).abs() < 1e-12);
        assert!((agg - (-0.06476)).abs() < 5e-5);

        let single = StrataPartition::trivial(n).unwrap();
        assert!((aggregate_estimate(&y, &w, &single).unwrap() - dm_estimate(&y, &w).unwrap()).abs() < 1e-12);

        // identical per-stratum effects
        let y = [3.0, 1.0, 7.0, 5.0, 6.0, 4.0];
        let w = bits(&[1, 0, 1, 0, 1, 0]);
        let p = StrataPartition::new(6, vec![vec![0, 1], vec![2, 3, 4, 5]]).unwrap();
        assert!((aggregate_estimate(&y, &w, &p).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_names_degenerate_stratum() {
        let p = StrataPartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(
            aggregate_estimate(&[1.0, 2.0, 3.0, 4.0], &bits(&[1, 0, 1, 1]), &p),
            Err(DesignError::DegenerateStratum { stratum: 2 })
        );
    }

    #[test]
    fn ols_two_unit_hand_solution() {
        let x = CovariateMatrix::intercept_only(2).unwrap();
        let fit = ols_fit(&bits(&[1, 0]), &x, &[3.0, 1.0], 1.0).unwrap();
        assert!((fit.tau_hat() - 2.0).abs() < 1e-12);
        assert!((fit.beta_hat()[0] - 1.0).abs() < 1e-12);
        let zero = ols_fit(&bits(&[1, 0]), &x, &[0.0, 0.0], 1.0).unwrap();
        assert!(zero.theta_hat.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn ols_recovers_noiseless_linear_model() {
        let mut rng = stream(8, 0);
        let n = 12;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| vec![1.0, rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let w = bits(&[1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1]);
        let (tau, beta) = (1.75, [0.5, -2.0, 3.25]);
        let y: Vec<f64> = (0..n)
            .map(|j| tau * w.get(j) as u8 as f64 + rows[j].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let fit = ols_fit(&w, &x, &y, 1.0).unwrap();
        assert!((fit.tau_hat() - tau).abs() < 1e-10);
        for (b, e) in fit.beta_hat().iter().zip(beta) {
            assert!((b - e).abs() < 1e-10);
        }
        assert_eq!(fit.residual_variance_estimate().map(|v| v < 1e-20), Some(true));
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        let x = CovariateMatrix::intercept_only(4).unwrap();
        assert_eq!(ols_fit(&bits(&[1, 1, 1, 1]), &x, &[1.0; 4], 1.0).unwrap_err(), DesignError::SingularDesignMatrix);
    }

    #[test]
    fn var_tau_examples() {
        let x = CovariateMatrix::intercept_only(4).unwrap();
        assert!((var_tau_ols(&bits(&[1, 1, 0, 0]), &x, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(var_tau_ols(&bits(&[1, 1, 1, 1]), &x, 1.0), Err(DesignError::CollinearTreatment));
    }

    #[test]
    fn var_tau_matches_full_inverse() {
        let mut rng = stream(9, 0);
        for _ in 0..50 {
            let n = rng.random_range(6..20usize);
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| vec![1.0, rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
            let x = CovariateMatrix::from_rows(&rows).unwrap();
            let mut w: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            w[0] = true;
            w[1] = false;
            let w = Assignment::new(w);
            let sigma2 = 2.5;
            let v = var_tau_ols(&w, &x, sigma2).unwrap();
            // independent route: (ZᵀZ)⁻¹ by LU on the normal matrix
            let z = design_matrix(&w, &x).unwrap();
            let inv = (z.transpose() * &z).try_inverse().unwrap();
            assert!((v - sigma2 * inv[(0, 0)]).abs() <= 1e-10 * v);
            let fit = ols_fit(&w, &x, &vec![0.0; n], sigma2).unwrap();
            assert!((v - fit.covariance[(0, 0)]).abs() <= 1e-10 * v);
        }
    }

    #[test]
    fn sc_examples() {
        assert_eq!(sc_estimate(&[5.0, 3.0, 9.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 2.0);
        assert_eq!(sc_estimate(&[4.0, 6.0, 2.0], &[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 3.0);
        assert_eq!(sc_estimate(&[7.0, 7.0, 7.0, 7.0], &[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.25, 0.75]).unwrap(), 0.0);
        assert!(matches!(
            sc_estimate(&[1.0, 2.0], &[0.6, 0.3], &[0.0, 1.0]),
            Err(DesignError::SimplexViolation { .. })
        ));
        assert_eq!(
            sc_estimate(&[1.0, 2.0], &[0.5, 0.5], &[0.0, 1.0]),
            Err(DesignError::OverlappingSupport { unit: 2 })
        );
    }

    #[test]
    fn ols_residuals_orthogonal_to_regressors() {
        let mut rng = stream(31, 0);
        for _ in 0..50 {
            let n = rng.random_range(5..20usize);
            let d = rng.random_range(1..4usize);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
            let x = CovariateMatrix::from_rows(&rows).unwrap().with_intercept();
            let mut w: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            w[0] = true;
            w[1] = false;
            let w = Assignment::new(w);
            let y: Vec<f64> = (0..n).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let Ok(fit) = ols_fit(&w, &x, &y, 1.0) else { continue };
            let z = design_matrix(&w, &x).unwrap();
            let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for c in z.column_iter() {
                assert!(c.dot(&fit.residuals).abs() <= 1e-9 * scale * n as f64);
            }
        }
    }
}
