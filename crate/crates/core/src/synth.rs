//! Synthetic control experiment design: choose a small treated set and
//! simplex weights (u, v) so that both synthetic units track the target
//! aggregate over the pre-period outcomes and covariates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::binomial;
use crate::error::{ensure_finite, ensure_len, DesignError, Result};
use crate::estimators::{check_simplex, sc_estimate};
use crate::oracle::enumerate_k_subsets;
use crate::simplex::{direct_loss, shifted_gram, solve_gram, GAP_TOL, MAX_ITERATIONS};
use crate::types::{CovariateMatrix, PanelData};

/// Largest number of treated supports the exhaustive search will visit.
pub const MAX_SYNTH_SUPPORTS: u128 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProblem {
    panel: PanelData,
    x: Option<CovariateMatrix>,
    f: Vec<f64>,
    k: usize,
}

impl SynthProblem {
    pub fn new(panel: PanelData, x: Option<CovariateMatrix>, f: Vec<f64>, k: usize) -> Result<Self> {
        let n = panel.n();
        if let Some(x) = &x {
            ensure_len(n, x.n())?;
        }
        ensure_len(n, f.len())?;
        ensure_finite(&f, "target weights f")?;
        check_simplex(&f, "f")?;
        if n < 2 {
            return Err(DesignError::InvalidParameter("synthetic design needs at least two units".into()));
        }
        if k < 1 || k > n - 1 {
            return Err(DesignError::InvalidParameter(format!("k = {k} must satisfy 1 <= k <= n - 1 = {}", n - 1)));
        }
        Ok(Self { panel, x, f, k })
    }

    /// Target aggregate with equal weight on every unit.
    pub fn uniform_target(panel: PanelData, x: Option<CovariateMatrix>, k: usize) -> Result<Self> {
        let n = panel.n();
        Self::new(panel, x, vec![1.0 / n as f64; n], k)
    }

    pub fn n(&self) -> usize {
        self.panel.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn panel(&self) -> &PanelData {
        &self.panel
    }

    pub fn covariates(&self) -> Option<&CovariateMatrix> {
        self.x.as_ref()
    }

    /// Covariate dimension, 0 without covariates.
    pub fn d(&self) -> usize {
        self.x.as_ref().map_or(0, CovariateMatrix::d)
    }

    /// Per-unit vectors `z_j` (pre-period outcomes, then covariates) and the
    /// aggregate `z̄ = Σ f_j z_j`.
    pub fn build_targets(&self) -> (Vec<DVector<f64>>, DVector<f64>) {
        let t0 = self.panel.t0();
        let d = self.d();
        let z: Vec<DVector<f64>> = (0..self.n())
            .map(|j| {
                let mut zj = DVector::zeros(t0 + d);
                zj.rows_mut(0, t0).copy_from(&self.panel.pre_period(j));
                if let Some(x) = &self.x {
                    zj.rows_mut(t0, d).copy_from(&x.row(j));
                }
                zj
            })
            .collect();
        let mut zbar = DVector::zeros(t0 + d);
        for (zj, &fj) in z.iter().zip(&self.f) {
            zbar.axpy(fj, zj, 1.0);
        }
        (z, zbar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWeights {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// 0-based, ascending.
    pub treated_set: Vec<usize>,
    pub u_loss: f64,
    pub v_loss: f64,
    /// `u_loss + v_loss`.
    pub fit_loss: f64,
}

impl SynthWeights {
    /// `Σ u_j Y_jt - Σ v_j Y_jt` for period `t`.
    pub fn estimate(&self, panel: &PanelData, t: usize) -> Result<f64> {
        if t >= panel.periods() {
            return Err(DesignError::InvalidParameter(format!("period {t} out of range")));
        }
        sc_estimate(&panel.period(t), &self.u, &self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Exhaustive,
    Greedy,
}

/// Solver constants reported alongside results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub gap_tolerance: f64,
    pub max_iterations: usize,
}

pub const SOLVER_SETTINGS: SolverSettings = SolverSettings { gap_tolerance: GAP_TOL, max_iterations: MAX_ITERATIONS };

struct Evaluator {
    z: Vec<DVector<f64>>,
    zbar: DVector<f64>,
    gram: DMatrix<f64>,
    n: usize,
}

struct SupportFit {
    u_cols: Vec<usize>,
    u_w: Vec<f64>,
    v_cols: Vec<usize>,
    v_w: Vec<f64>,
    u_loss: f64,
    v_loss: f64,
}

impl SupportFit {
    fn total(&self) -> f64 {
        self.u_loss + self.v_loss
    }
}

impl Evaluator {
    fn new(prob: &SynthProblem) -> Self {
        let (z, zbar) = prob.build_targets();
        let gram = shifted_gram(&z, &zbar);
        Self { z, zbar, gram, n: prob.n() }
    }

    fn fit(&self, support: &[usize]) -> SupportFit {
        let mut inside = vec![false; self.n];
        for &j in support {
            inside[j] = true;
        }
        let v_cols: Vec<usize> = (0..self.n).filter(|&j| !inside[j]).collect();
        let u_w = solve_gram(&self.gram, support).weights;
        let v_w = solve_gram(&self.gram, &v_cols).weights;
        let u_loss = direct_loss(&self.z, support, &u_w, &self.zbar);
        let v_loss = direct_loss(&self.z, &v_cols, &v_w, &self.zbar);
        SupportFit { u_cols: support.to_vec(), u_w, v_cols, v_w, u_loss, v_loss }
    }

    fn loss(&self, support: &[usize]) -> f64 {
        self.fit(support).total()
    }

    fn weights(&self, support: &[usize]) -> SynthWeights {
        let fit = self.fit(support);
        let mut u = vec![0.0; self.n];
        let mut v = vec![0.0; self.n];
        for (&j, &w) in fit.u_cols.iter().zip(&fit.u_w) {
            u[j] = w;
        }
        for (&j, &w) in fit.v_cols.iter().zip(&fit.v_w) {
            v[j] = w;
        }
        SynthWeights {
            u,
            v,
            treated_set: support.to_vec(),
            u_loss: fit.u_loss,
            v_loss: fit.v_loss,
            fit_loss: fit.total(),
        }
    }
}

/// Number of treated supports of size `1..=k` on `n` units.
pub fn support_count(n: usize, k: usize) -> u128 {
    (1..=k).map(|s| binomial(n, s)).fold(0u128, u128::saturating_add)
}

/// Solves the cardinality-constrained synthetic design problem by search
/// over treated supports. Ties go to the smaller support, then the
/// lexicographically first.
pub fn solve_synth_design(prob: &SynthProblem, mode: SynthMode) -> Result<SynthWeights> {
    let eval = Evaluator::new(prob);
    let best = match mode {
        SynthMode::Exhaustive => exhaustive_support(&eval, prob.k())?,
        SynthMode::Greedy => greedy_support(&eval, prob.k()),
    };
    Ok(eval.weights(&best))
}

fn exhaustive_support(eval: &Evaluator, k: usize) -> Result<Vec<usize>> {
    let count = support_count(eval.n, k);
    if count > MAX_SYNTH_SUPPORTS {
        return Err(DesignError::CombinatorialOverflow { count, cap: MAX_SYNTH_SUPPORTS });
    }
    let mut supports = Vec::with_capacity(count as usize);
    for s in 1..=k {
        supports.extend(enumerate_k_subsets(eval.n, s)?);
    }
    let losses: Vec<f64> = supports.par_iter().map(|s| eval.loss(s)).collect();
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    Ok(supports.swap_remove(best))
}

/// Forward selection seeded from every unit in turn; each prefix of size
/// `1..=k` is refined by 1-exchange and the best over all is kept.
fn greedy_support(eval: &Evaluator, k: usize) -> Vec<usize> {
    let n = eval.n;
    let runs: Vec<(Vec<usize>, f64)> = (0..n)
        .into_par_iter()
        .map(|seed_unit| {
            let mut current = vec![seed_unit];
            let mut best = exchange(eval, current.clone(), eval.loss(&current));
            while current.len() < k {
                let mut step: Option<(Vec<usize>, f64)> = None;
                for j in (0..n).filter(|j| !current.contains(j)) {
                    let mut cand = current.clone();
                    cand.push(j);
                    cand.sort_unstable();
                    let l = eval.loss(&cand);
                    if step.as_ref().is_none_or(|(_, b)| l < *b) {
                        step = Some((cand, l));
                    }
                }
                let (cand, l) = step.expect("k <= n - 1 leaves a unit to add");
                current = cand.clone();
                let refined = exchange(eval, cand, l);
                if better(&refined, &best) {
                    best = refined;
                }
            }
            best
        })
        .collect();
    let mut best = &runs[0];
    for run in &runs[1..] {
        if better(run, best) {
            best = run;
        }
    }
    best.0.clone()
}

/// Lower loss wins; exact ties go to the smaller, then lexicographically
/// first, support.
fn better(a: &(Vec<usize>, f64), b: &(Vec<usize>, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && (a.0.len(), &a.0) < (b.0.len(), &b.0))
}

/// Best-improvement 1-exchange: swap one treated unit for one untreated
/// unit until no swap lowers the loss.
fn exchange(eval: &Evaluator, mut set: Vec<usize>, mut loss: f64) -> (Vec<usize>, f64) {
    let n = eval.n;
    loop {
        let mut step: Option<(Vec<usize>, f64)> = None;
        for pos in 0..set.len() {
            for j in (0..n).filter(|j| !set.contains(j)) {
                let mut cand = set.clone();
                cand[pos] = j;
                cand.sort_unstable();
                let l = eval.loss(&cand);
                if l < loss && step.as_ref().is_none_or(|(_, b)| l < *b) {
                    step = Some((cand, l));
                }
            }
        }
        match step {
            Some((cand, l)) => {
                set = cand;
                loss = l;
            }
            None => return (set, loss),
        }
    }
}

/// Constants of the factor-model bias bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBoundParams {
    pub beta_bar: f64,
    pub lambda_bar: f64,
    pub r: usize,
    pub d: usize,
    /// Lower bound on the smallest eigenvalue of `λᵀλ / T0` over the
    /// pre-period factor loadings.
    pub zeta_lower: f64,
    pub c: f64,
    pub sigma_bar: f64,
    pub t0: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBound {
    pub total: f64,
    /// Contribution proportional to the fit constant `c`.
    pub fit_term: f64,
    /// Contribution proportional to `σ̄ T0^{-1/2}`.
    pub noise_term: f64,
}

impl BiasBoundParams {
    pub fn validate(&self) -> Result<()> {
        let reals = [self.beta_bar, self.lambda_bar, self.zeta_lower, self.c, self.sigma_bar];
        ensure_finite(&reals, "bias bound constants")?;
        if reals.iter().any(|&v| v < 0.0) {
            return Err(DesignError::InvalidParameter("bias bound constants must be non-negative".into()));
        }
        if self.zeta_lower <= 0.0 {
            return Err(DesignError::InvalidParameter("zeta_lower must be positive".into()));
        }
        if self.t0 == 0 || self.n == 0 {
            return Err(DesignError::InvalidParameter("T0 and n must be positive".into()));
        }
        if self.r > self.t0 {
            return Err(DesignError::InvalidParameter(format!("r = {} exceeds T0 = {}", self.r, self.t0)));
        }
        Ok(())
    }

    /// Upper bound on the ex-post bias of the synthetic control estimator in
    /// any experimental period. Uses the natural logarithm.
    pub fn bound(&self) -> Result<BiasBound> {
        self.validate()?;
        let bd = self.beta_bar * self.d as f64;
        let ratio = self.lambda_bar * self.lambda_bar * self.r as f64 / self.zeta_lower;
        let fit_term = 2.0 * (bd + (1.0 + bd) * ratio) * self.c;
        let noise_term =
            2.0 * ratio * (2.0 * (2.0 * self.n as f64).ln()).sqrt() * self.sigma_bar / (self.t0 as f64).sqrt();
        Ok(BiasBound { total: fit_term + noise_term, fit_term, noise_term })
    }
}

/// Smallest `c` satisfying the covariate and pre-period fit hypotheses of
/// the bias bound, for covariates and outcomes separately.
pub fn check_fit_constants(prob: &SynthProblem, w: &SynthWeights) -> Result<(f64, f64)> {
    let n = prob.n();
    ensure_len(n, w.u.len())?;
    ensure_len(n, w.v.len())?;
    let (z, zbar) = prob.build_targets();
    let t0 = prob.panel().t0();
    let d = prob.d();
    let residual = |weights: &[f64]| {
        let mut r = -zbar.clone();
        for (zj, &a) in z.iter().zip(weights) {
            r.axpy(a, zj, 1.0);
        }
        r
    };
    let ru = residual(&w.u);
    let rv = residual(&w.v);
    let scaled = |r: &DVector<f64>, start: usize, len: usize| (r.rows(start, len).norm_squared() / len as f64).sqrt();
    let c_out = scaled(&ru, 0, t0).max(scaled(&rv, 0, t0));
    let c_cov = if d == 0 { 0.0 } else { scaled(&ru, t0, d).max(scaled(&rv, t0, d)) };
    Ok((c_cov, c_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn panel(rows: &[Vec<f64>], t0: usize) -> PanelData {
        let t = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        PanelData::new(DMatrix::from_row_slice(rows.len(), t, &flat), t0).unwrap()
    }

    fn random_problem(seed: u64, n: usize, k: usize, t0: usize, d: usize) -> SynthProblem {
        let mut rng = stream(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..t0 + 1).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x = (d > 0).then(|| {
            let xr: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            CovariateMatrix::from_rows(&xr).unwrap()
        });
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let mut f: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let head: f64 = f[..n - 1].iter().sum();
        f[n - 1] = 1.0 - head;
        SynthProblem::new(panel(&rows, t0), x, f, k).unwrap()
    }

    fn assert_valid(w: &SynthWeights, k: usize) {
        check_simplex(&w.u, "u").unwrap();
        check_simplex(&w.v, "v").unwrap();
        assert!(w.treated_set.len() <= k && !w.treated_set.is_empty());
        for j in 0..w.u.len() {
            let treated = w.treated_set.contains(&j);
            if !treated {
                assert_eq!(w.u[j], 0.0);
            } else {
                assert_eq!(w.v[j], 0.0);
            }
            assert_eq!(w.u[j] * w.v[j], 0.0);
        }
    }

    #[test]
    fn targets_without_covariates() {
        let p = panel(&[vec![1.0, 2.0, 3.0, 9.0], vec![4.0, 5.0, 6.0, 9.0]], 3);
        let prob = SynthProblem::new(p, None, vec![1.0, 0.0], 1).unwrap();
        let (z, zbar) = prob.build_targets();
        assert_eq!(z[0].as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(zbar, z[0]);
    }

    #[test]
    fn targets_stack_covariates_after_outcomes() {
        let p = panel(&[vec![1.0, 0.0], vec![3.0, 0.0]], 1);
        let x = CovariateMatrix::from_rows(&[vec![10.0], vec![20.0]]).unwrap();
        let prob = SynthProblem::new(p, Some(x), vec![0.5, 0.5], 1).unwrap();
        let (z, zbar) = prob.build_targets();
        assert_eq!(z[1].as_slice(), &[3.0, 20.0]);
        assert_eq!(zbar.as_slice(), &[2.0, 15.0]);
    }

    #[test]
    fn identical_units_give_same_aggregate() {
        let p = panel(&[vec![1.0, 2.0, 0.0], vec![1.0, 2.0, 5.0]], 2);
        let prob = SynthProblem::uniform_target(p, None, 1).unwrap();
        let (z, zbar) = prob.build_targets();
        assert_eq!(zbar, z[0]);
        assert_eq!(zbar, z[1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = panel(&[vec![1.0, 2.0], vec![3.0, 4.0]], 1);
        assert!(SynthProblem::new(p.clone(), None, vec![0.6, 0.6], 1).is_err());
        assert!(SynthProblem::new(p.clone(), None, vec![0.5, 0.5], 2).is_err());
        assert!(SynthProblem::new(p.clone(), None, vec![0.5, 0.5], 0).is_err());
        let x = CovariateMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(SynthProblem::new(p, Some(x), vec![0.5, 0.5], 1).is_err());
    }

    #[test]
    fn unit_matching_the_aggregate_is_treated_alone() {
        // unit 0 sits at the mean of units 1..3
        let p = panel(&[vec![2.0, 2.0, 0.0], vec![1.0, 3.0, 0.0], vec![3.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]], 2);
        let prob = SynthProblem::new(p, None, vec![0.25; 4], 1).unwrap();
        let w = solve_synth_design(&prob, SynthMode::Exhaustive).unwrap();
        assert_eq!(w.treated_set, vec![0]);
        assert_eq!(w.u, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(w.u_loss, 0.0);
        assert_valid(&w, 1);
    }

    #[test]
    fn two_unit_panel_by_hand() {
        // f = (0.25, 0.75): zbar = 0.25*0 + 0.75*4 = 3 in the single pre-period.
        // S = {0}: (0-3)^2 + (4-3)^2 = 10; S = {1}: (4-3)^2 + (0-3)^2 = 10.
        // Tie goes to the first support.
        let p = panel(&[vec![0.0, 1.0], vec![4.0, 1.0]], 1);
        let prob = SynthProblem::new(p, None, vec![0.25, 0.75], 1).unwrap();
        let w = solve_synth_design(&prob, SynthMode::Exhaustive).unwrap();
        assert_eq!(w.treated_set, vec![0]);
        assert_eq!(w.fit_loss, 10.0);
        assert_eq!(w.u, vec![1.0, 0.0]);
        assert_eq!(w.v, vec![0.0, 1.0]);

        let p = panel(&[vec![0.0, 1.0], vec![4.0, 1.0]], 1);
        let x = CovariateMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let prob = SynthProblem::new(p, Some(x), vec![0.5, 0.5], 1).unwrap();
        // zbar = (2, 1); both supports give (0-2)^2+(0-1)^2 + (4-2)^2+(2-1)^2 = 10
        let w = solve_synth_design(&prob, SynthMode::Exhaustive).unwrap();
        assert_eq!(w.fit_loss, 10.0);
    }

    #[test]
    fn greedy_close_to_exhaustive_on_small_fixtures() {
        let mut worse = 0;
        for seed in 0..100u64 {
            let mut rng = stream(seed, 99);
            let n = rng.random_range(3..=10usize);
            let k = rng.random_range(1..=3usize.min(n - 1));
            let prob = random_problem(seed, n, k, 4, 1);
            let ex = solve_synth_design(&prob, SynthMode::Exhaustive).unwrap();
            let gr = solve_synth_design(&prob, SynthMode::Greedy).unwrap();
            assert_valid(&ex, k);
            assert_valid(&gr, k);
            assert!(ex.fit_loss <= gr.fit_loss, "seed {seed}: {} > {}", ex.fit_loss, gr.fit_loss);
            if gr.fit_loss > 1.1 * ex.fit_loss {
                worse += 1;
            }
        }
        assert_eq!(worse, 0);
    }

    #[test]
    fn exhaustive_overflow_is_reported() {
        let prob = random_problem(1, 40, 5, 2, 0);
        assert!(matches!(
            solve_synth_design(&prob, SynthMode::Exhaustive),
            Err(DesignError::CombinatorialOverflow { .. })
        ));
        let w = solve_synth_design(&prob, SynthMode::Greedy).unwrap();
        assert_valid(&w, 5);
    }

    #[test]
    fn bias_bound_reference_value() {
        let p = BiasBoundParams {
            beta_bar: 1.0,
            lambda_bar: 1.0,
            r: 1,
            d: 2,
            zeta_lower: 1.0,
            c: 0.1,
            sigma_bar: 1.0,
            t0: 100,
            n: 50,
        };
        let b = p.bound().unwrap();
        let expected = 1.0 + 0.2 * (2.0 * 100f64.ln()).sqrt();
        assert!((b.total - expected).abs() < 1e-14);
        // 1.606971 to six places
        assert!((b.total - 1.60698).abs() < 1e-5);
        assert!((b.fit_term - 1.0).abs() < 1e-14);

        let zero = BiasBoundParams { c: 0.0, sigma_bar: 0.0, ..p }.bound().unwrap();
        assert_eq!(zero.total, 0.0);

        let a = BiasBoundParams { c: 0.0, ..p }.bound().unwrap().total;
        let b2 = BiasBoundParams { c: 0.0, t0: 200, ..p }.bound().unwrap().total;
        assert!((b2 / a - 0.5f64.sqrt()).abs() < 1e-14);

        assert!(BiasBoundParams { zeta_lower: 0.0, ..p }.bound().is_err());
        assert!(BiasBoundParams { r: 101, ..p }.bound().is_err());
    }

    #[test]
    fn fit_constants() {
        let p = panel(&[vec![2.0, 2.0, 0.0], vec![1.0, 3.0, 0.0], vec![3.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]], 2);
        let prob = SynthProblem::new(p, None, vec![0.25; 4], 1).unwrap();
        let w = solve_synth_design(&prob, SynthMode::Exhaustive).unwrap();
        let (cc, co) = check_fit_constants(&prob, &w).unwrap();
        assert_eq!(cc, 0.0);
        assert!(co < 1e-12);

        // residual of u is (2, 2, 2, 2) against zbar: norm² = 16 = 4·T0
        let t0 = 4;
        let p = panel(&[vec![2.0, 2.0, 2.0, 2.0, 0.0], vec![-2.0, -2.0, -2.0, -2.0, 0.0]], t0);
        let prob = SynthProblem::new(p, None, vec![0.5, 0.5], 1).unwrap();
        let w = SynthWeights {
            u: vec![1.0, 0.0],
            v: vec![0.0, 1.0],
            treated_set: vec![0],
            u_loss: 16.0,
            v_loss: 16.0,
            fit_loss: 32.0,
        };
        let (cc, co) = check_fit_constants(&prob, &w).unwrap();
        assert_eq!(cc, 0.0);
        assert_eq!(co, 2.0);
    }

    #[test]
    fn estimate_uses_experimental_period() {
        let p = panel(&[vec![2.0, 7.0], vec![2.0, 3.0]], 1);
        let prob = SynthProblem::uniform_target(p.clone(), None, 1).unwrap();
        let w = solve_synth_design(&prob, SynthMode::Exhaustive).unwrap();
        assert_eq!(w.estimate(&p, 1).unwrap(), 4.0);
        assert!(w.estimate(&p, 2).is_err());
    }

    proptest! {
        #[test]
        fn weights_always_valid(seed in any::<u64>(), n in 2usize..8, kk in 1usize..4, d in 0usize..3) {
            let k = kk.min(n - 1);
            let prob = random_problem(seed, n, k, 3, d);
            for mode in [SynthMode::Exhaustive, SynthMode::Greedy] {
                let w = solve_synth_design(&prob, mode).unwrap();
                assert_valid(&w, k);
            }
        }

        #[test]
        fn period_shift_leaves_estimate_unchanged(seed in any::<u64>(), shift in -100.0f64..100.0) {
            let prob = random_problem(seed, 5, 2, 3, 0);
            let w = solve_synth_design(&prob, SynthMode::Greedy).unwrap();
            let t = prob.panel().t0();
            let mut m = prob.panel().outcomes().clone();
            let base = w.estimate(prob.panel(), t).unwrap();
            m.column_mut(t).add_scalar_mut(shift);
            let shifted = PanelData::new(m, prob.panel().t0()).unwrap();
            prop_assert!((w.estimate(&shifted, t).unwrap() - base).abs() < 1e-9 * (1.0 + shift.abs()));
        }
    }
}
