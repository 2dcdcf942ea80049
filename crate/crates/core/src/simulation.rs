//! Seeded Monte Carlo generators for the outcome models and a replication
//! engine for bias, variance and MSE studies.
//!
//! Replication `r` always draws from `stream(seed, r)` and results are
//! reduced in replication order, so reports are bit-identical for any
//! thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::sample_assignment;
use crate::error::{ensure_finite, ensure_len, DesignError, Result};
use crate::estimators::{ols_fit, sc_estimate};
use crate::linalg::neumaier_sum;
use crate::oracle::{ipw_treated_mean, two_stage_marginal_propensities, EstimatorKind, StageTwoPolicy};
use crate::rng::{stream, DesignRng};
use crate::robust::AdditiveModelSpec;
use crate::synth::{check_fit_constants, solve_synth_design, BiasBoundParams, SynthMode, SynthProblem};
use crate::types::{Assignment, CovariateMatrix, DesignSpec, PanelData, ScienceTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// `±σ` with equal probability.
    Rademacher,
}

impl NoiseKind {
    /// One draw with standard deviation `sigma`.
    pub fn draw<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
        }
    }
}

/// `Y_j(w) = τ w + βᵀx_j + ε_j`, the same noise draw in both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelSpec {
    pub tau: f64,
    pub beta: Vec<f64>,
    pub x: CovariateMatrix,
    pub sigma: f64,
    pub noise: NoiseKind,
}

impl LinearModelSpec {
    pub fn new(tau: f64, beta: Vec<f64>, x: CovariateMatrix, sigma: f64, noise: NoiseKind) -> Result<Self> {
        ensure_len(x.d(), beta.len())?;
        ensure_finite(&beta, "beta")?;
        ensure_finite(&[tau], "tau")?;
        check_scale(sigma)?;
        Ok(Self { tau, beta, x, sigma, noise })
    }
}

/// Panel factor model
/// `Y_jt(w) = α_t(w) + β_t(w)ᵀX_j + λ_t(w)ᵀμ_j + ε_jt(w)`.
/// Index 0 of each pair is the control arm.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanelSpec {
    /// `alpha[w][t]`.
    pub alpha: [Vec<f64>; 2],
    /// `beta[w]` is T × d.
    pub beta: [DMatrix<f64>; 2],
    /// `lambda[w]` is T × r.
    pub lambda: [DMatrix<f64>; 2],
    /// n × r.
    pub mu: DMatrix<f64>,
    /// n × d; `None` means d = 0.
    pub x: Option<CovariateMatrix>,
    pub sigma: f64,
    pub noise: NoiseKind,
    pub t0: usize,
}

impl FactorPanelSpec {
    pub fn validate(&self) -> Result<()> {
        let t = self.periods();
        let n = self.mu.nrows();
        let r = self.mu.ncols();
        let d = self.d();
        if n < 2 {
            return Err(DesignError::InvalidParameter("factor panel needs at least two units".into()));
        }
        if self.t0 < 1 || self.t0 >= t {
            return Err(DesignError::InvalidParameter(format!(
                "T0 must satisfy 1 <= T0 < T (T0 = {}, T = {t})",
                self.t0
            )));
        }
        if let Some(x) = &self.x {
            ensure_len(n, x.n())?;
        }
        for w in 0..2 {
            ensure_len(t, self.alpha[w].len())?;
            ensure_len(t, self.beta[w].nrows())?;
            ensure_len(d, self.beta[w].ncols())?;
            ensure_len(t, self.lambda[w].nrows())?;
            ensure_len(r, self.lambda[w].ncols())?;
            ensure_finite(&self.alpha[w], "alpha")?;
            ensure_finite(self.beta[w].as_slice(), "beta")?;
            ensure_finite(self.lambda[w].as_slice(), "lambda")?;
        }
        ensure_finite(self.mu.as_slice(), "mu")?;
        check_scale(self.sigma)
    }

    pub fn n(&self) -> usize {
        self.mu.nrows()
    }

    pub fn periods(&self) -> usize {
        self.alpha[0].len()
    }

    pub fn r(&self) -> usize {
        self.mu.ncols()
    }

    pub fn d(&self) -> usize {
        self.x.as_ref().map_or(0, CovariateMatrix::d)
    }

    /// Noiseless mean of `Y_jt(w)`.
    pub fn mean_outcome(&self, j: usize, t: usize, w: usize) -> f64 {
        let mut m = self.alpha[w][t];
        if let Some(x) = &self.x {
            m += (0..x.d()).map(|i| self.beta[w][(t, i)] * x.matrix()[(j, i)]).sum::<f64>();
        }
        m + (0..self.r()).map(|i| self.lambda[w][(t, i)] * self.mu[(j, i)]).sum::<f64>()
    }

    /// One draw of both potential-outcome panels, each n × T.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> PanelDraw {
        let (n, t) = (self.n(), self.periods());
        let mut y = [DMatrix::zeros(n, t), DMatrix::zeros(n, t)];
        for j in 0..n {
            for s in 0..t {
                for (w, yw) in y.iter_mut().enumerate() {
                    yw[(j, s)] = self.mean_outcome(j, s, w) + self.noise.draw(self.sigma, rng);
                }
            }
        }
        let [y0, y1] = y;
        PanelDraw { y0, y1, t0: self.t0 }
    }

    /// `max |β_t(w)_i|`.
    pub fn beta_bar(&self) -> f64 {
        self.beta.iter().flat_map(|b| b.iter()).fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// `max |λ_t(w)_i|`.
    pub fn lambda_bar(&self) -> f64 {
        self.lambda.iter().flat_map(|l| l.iter()).fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Smallest eigenvalue of `λ(0)ᵀλ(0) / T0` over the pre-period loadings.
    pub fn zeta_lower(&self) -> f64 {
        let pre = self.lambda[0].rows(0, self.t0);
        let gram = pre.transpose() * pre / self.t0 as f64;
        SymmetricEigen::new(gram).eigenvalues.min()
    }

    /// Bias-bound constants for this model with fit constant `c`.
    pub fn bound_params(&self, c: f64) -> BiasBoundParams {
        BiasBoundParams {
            beta_bar: self.beta_bar(),
            lambda_bar: self.lambda_bar(),
            r: self.r(),
            d: self.d(),
            zeta_lower: self.zeta_lower(),
            c,
            sigma_bar: self.sigma,
            t0: self.t0,
            n: self.n(),
        }
    }

    /// A model satisfying the bias-bound hypotheses with known constants:
    /// `r = 2` factors with loadings `(1, (-1)^t)` in every period and arm,
    /// one covariate with coefficient 1 in both arms, a unit treatment
    /// effect, and unit-level `μ_j, X_j` drawn uniformly from `[-1, 1]`
    /// with stream `(seed, u64::MAX)`. Needs even `t0` for `ζ = 1`.
    pub fn alternating_fixture(
        n: usize,
        t0: usize,
        post: usize,
        sigma: f64,
        noise: NoiseKind,
        seed: u64,
    ) -> Result<Self> {
        let t = t0 + post;
        let mut rng = stream(seed, u64::MAX);
        let mu = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..=1.0));
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..=1.0)]).collect();
        let lambda = DMatrix::from_fn(t, 2, |s, i| if i == 0 || s % 2 == 0 { 1.0 } else { -1.0 });
        let alpha0: Vec<f64> = (0..t).map(|s| (s % 5) as f64 * 0.1).collect();
        let alpha1: Vec<f64> = alpha0.iter().map(|a| a + 1.0).collect();
        let spec = Self {
            alpha: [alpha0, alpha1],
            beta: [DMatrix::from_element(t, 1, 1.0), DMatrix::from_element(t, 1, 1.0)],
            lambda: [lambda.clone(), lambda],
            mu,
            x: Some(CovariateMatrix::from_rows(&xs)?),
            sigma,
            noise,
            t0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Both potential-outcome panels of one factor-model draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDraw {
    pub y0: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub t0: usize,
}

impl PanelDraw {
    /// What is observed before anyone is treated: control outcomes.
    pub fn control_panel(&self) -> Result<PanelData> {
        PanelData::new(self.y0.clone(), self.t0)
    }
}

fn check_scale(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DesignError::InvalidParameter(format!("noise scale must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum DgpSpec {
    /// Noise has variance `model.sigma2`, drawn independently per arm.
    Additive {
        model: AdditiveModelSpec,
        noise: NoiseKind,
    },
    Linear(LinearModelSpec),
    FactorPanel(FactorPanelSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Table(ScienceTable),
    Panel(PanelDraw),
}

impl DgpSpec {
    pub fn n(&self) -> usize {
        match self {
            DgpSpec::Additive { model, .. } => model.n(),
            DgpSpec::Linear(m) => m.x.n(),
            DgpSpec::FactorPanel(m) => m.n(),
        }
    }

    /// Model-level treatment effect, when it is constant.
    pub fn population_effect(&self) -> Option<f64> {
        match self {
            DgpSpec::Additive { model, .. } => Some(model.tau()),
            DgpSpec::Linear(m) => Some(m.tau),
            DgpSpec::FactorPanel(_) => None,
        }
    }

    /// Covariates a regression estimator should adjust for.
    fn covariates(&self) -> Result<CovariateMatrix> {
        match self {
            DgpSpec::Linear(m) => Ok(m.x.clone()),
            _ => CovariateMatrix::intercept_only(self.n()),
        }
    }
}

/// Samples one science table (or panel pair for the factor model).
pub fn draw_science_table<R: Rng + ?Sized>(dgp: &DgpSpec, rng: &mut R) -> Result<Draw> {
    match dgp {
        DgpSpec::Additive { model, noise } => {
            let sd = model.sigma2.sqrt();
            let mut y1 = Vec::with_capacity(model.n());
            let mut y0 = Vec::with_capacity(model.n());
            for g in &model.g {
                y1.push(model.alpha1 + g + noise.draw(sd, rng));
                y0.push(model.alpha0 + g + noise.draw(sd, rng));
            }
            Ok(Draw::Table(ScienceTable::new(y1, y0)?))
        }
        DgpSpec::Linear(m) => {
            let base = m.x.matrix() * nalgebra::DVector::from_column_slice(&m.beta);
            let mut y1 = Vec::with_capacity(m.x.n());
            let mut y0 = Vec::with_capacity(m.x.n());
            for b in base.iter() {
                let e = m.noise.draw(m.sigma, rng);
                y1.push(m.tau + b + e);
                y0.push(b + e);
            }
            Ok(Draw::Table(ScienceTable::new(y1, y0)?))
        }
        DgpSpec::FactorPanel(m) => {
            m.validate()?;
            Ok(Draw::Panel(m.draw(rng)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Dm,
    Ipw,
    Aggregate(crate::types::StrataPartition),
    /// Treatment coefficient of OLS on `[w | x]`, with `x` the model's
    /// covariates (intercept only for the additive model).
    Ols,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    /// Sample ATE of each drawn table.
    Sample,
    /// The model's constant treatment effect.
    Population,
    Fixed(f64),
}

/// Empirical moments of `estimate - target` over the included replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub replications: usize,
    /// Replications dropped because the estimator was undefined on the
    /// drawn assignment.
    pub excluded: usize,
    /// Mean of the estimates.
    pub mean: f64,
    pub bias: f64,
    /// Divisor-m variance of the errors.
    pub variance: f64,
    pub mse: f64,
    /// Standard error of `bias`.
    pub mc_standard_error: f64,
    /// Standard error of `mse` as a mean of squared errors.
    pub mse_standard_error: f64,
    pub seed: u64,
}

impl McReport {
    /// Builds a report from per-replication `(estimate, target)` pairs, in
    /// replication order.
    pub fn from_pairs(pairs: &[(f64, f64)], excluded: usize, seed: u64) -> Result<Self> {
        let m = pairs.len();
        if m < 2 {
            return Err(DesignError::InvalidParameter(format!("need at least two usable replications, got {m}")));
        }
        let mf = m as f64;
        let mean = neumaier_sum(pairs.iter().map(|p| p.0)) / mf;
        let errors: Vec<f64> = pairs.iter().map(|(e, t)| e - t).collect();
        let bias = neumaier_sum(errors.iter().copied()) / mf;
        let variance = neumaier_sum(errors.iter().map(|e| (e - bias).powi(2))) / mf;
        // this identity holds exactly in real arithmetic; define mse through
        // it so the report is internally consistent
        let mse = variance + bias * bias;
        let mc_standard_error = (variance / (mf - 1.0)).sqrt();
        let sq_mean = neumaier_sum(errors.iter().map(|e| e * e)) / mf;
        let sq_var = neumaier_sum(errors.iter().map(|e| (e * e - sq_mean).powi(2))) / (mf - 1.0);
        let mse_standard_error = (sq_var / mf).sqrt();
        Ok(Self {
            replications: m + excluded,
            excluded,
            mean,
            bias,
            variance,
            mse,
            mc_standard_error,
            mse_standard_error,
            seed,
        })
    }
}

fn is_degenerate(e: &DesignError) -> bool {
    matches!(
        e,
        DesignError::DegenerateAssignment
            | DesignError::DegenerateStratum { .. }
            | DesignError::PositivityViolated { .. }
            | DesignError::SingularDesignMatrix
            | DesignError::CollinearTreatment
    )
}

/// Replicates draw-assign-estimate `reps` times. Replications on which the
/// estimator is undefined are counted in `excluded`.
pub fn run_replications(
    dgp: &DgpSpec,
    design: &DesignSpec,
    estimator: &EstimatorSpec,
    estimand: Estimand,
    reps: usize,
    seed: u64,
) -> Result<McReport> {
    if reps < 2 {
        return Err(DesignError::InvalidParameter("need at least two replications".into()));
    }
    let n = dgp.n();
    ensure_len(n, design.n())?;
    design.validate()?;
    if matches!(dgp, DgpSpec::FactorPanel(_)) {
        return Err(DesignError::InvalidParameter("panel models are studied with synth_bias_study".into()));
    }
    let fixed = match estimand {
        Estimand::Sample => None,
        Estimand::Population => Some(dgp.population_effect().expect("table models have a constant effect")),
        Estimand::Fixed(v) => Some(v),
    };
    let props = design.marginal_propensities();
    let x = dgp.covariates()?;
    let kind = match estimator {
        EstimatorSpec::Dm => Some(EstimatorKind::Dm),
        EstimatorSpec::Ipw => Some(EstimatorKind::Ipw),
        EstimatorSpec::Aggregate(p) => Some(EstimatorKind::Aggregate(p.clone())),
        EstimatorSpec::Ols => None,
    };

    let outcomes: Vec<Result<Option<(f64, f64)>>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let Draw::Table(table) = draw_science_table(dgp, &mut rng)? else {
                unreachable!("table models draw tables")
            };
            let w = sample_assignment(design, &mut rng);
            let y = table.observed(&w)?;
            let est = match &kind {
                Some(k) => k.evaluate(&y, &w, &props),
                None => ols_fit(&w, &x, &y, 1.0).map(|f| f.tau_hat()),
            };
            let target = fixed.unwrap_or_else(|| table.sample_ate());
            match est {
                Ok(v) => Ok(Some((v, target))),
                Err(e) if is_degenerate(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut pairs = Vec::with_capacity(reps);
    let mut excluded = 0;
    for o in outcomes {
        match o? {
            Some(p) => pairs.push(p),
            None => excluded += 1,
        }
    }
    McReport::from_pairs(&pairs, excluded, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub replications: usize,
    pub stopped: usize,
    pub stop_fraction: f64,
    /// Mean of the running average at the stopping time over stopped
    /// paths; `None` when no path stopped.
    pub conditional_mean: Option<f64>,
    /// Smallest running average at stopping over stopped paths.
    pub min_stopped_mean: Option<f64>,
    pub seed: u64,
}

/// First `j ≤ horizon` with `(Σ_{i≤j} B_i)/j ≥ threshold` for fair coin
/// flips `B_i`, and the running average there.
pub fn stopping_path<R: Rng + ?Sized>(threshold: f64, horizon: usize, rng: &mut R) -> Option<(usize, f64)> {
    let mut ones = 0u64;
    for j in 1..=horizon {
        ones += u64::from(rng.random::<bool>());
        let mean = ones as f64 / j as f64;
        if mean >= threshold {
            return Some((j, mean));
        }
    }
    None
}

/// Runs the optional-stopping experiment on `reps` independent paths.
pub fn stopping_rule_simulation(threshold: f64, horizon: usize, reps: usize, seed: u64) -> Result<StoppingReport> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(DesignError::InvalidParameter(format!("threshold must be positive and finite, got {threshold}")));
    }
    if horizon == 0 || reps == 0 {
        return Err(DesignError::InvalidParameter("horizon and reps must be positive".into()));
    }
    let stops: Vec<Option<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| stopping_path(threshold, horizon, &mut stream(seed, r)).map(|(_, m)| m))
        .collect();
    let stopped: Vec<f64> = stops.into_iter().flatten().collect();
    let m = stopped.len();
    // threshold plus a sum of non-negative excesses, so it can never fall
    // below the threshold through rounding
    let conditional_mean = (m > 0).then(|| threshold + neumaier_sum(stopped.iter().map(|v| v - threshold)) / m as f64);
    let min_stopped_mean = stopped.iter().copied().reduce(f64::min);
    Ok(StoppingReport {
        replications: reps,
        stopped: m,
        stop_fraction: m as f64 / reps as f64,
        conditional_mean,
        min_stopped_mean,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageReport {
    /// Treated sample mean, against `E[Y(1)] = q`.
    pub sample_mean: McReport,
    /// IPW estimate of `E[Y(1)]` with path-tree propensities.
    pub ipw: McReport,
    pub propensities: Vec<f64>,
}

/// Monte Carlo of the three-unit two-stage experiment with i.i.d.
/// Bernoulli(q) potential outcomes.
pub fn two_stage_simulation(q: f64, policy: StageTwoPolicy, reps: usize, seed: u64) -> Result<TwoStageReport> {
    let e = two_stage_marginal_propensities(q, policy)?;
    if reps < 2 {
        return Err(DesignError::InvalidParameter("need at least two replications".into()));
    }
    let draws: Vec<Result<(f64, f64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let y1: Vec<f64> = (0..3).map(|_| f64::from(u8::from(rng.random::<f64>() < q))).collect();
            let y0: Vec<f64> = (0..3).map(|_| f64::from(u8::from(rng.random::<f64>() < q))).collect();
            let first = usize::from(rng.random::<bool>());
            let pt = policy.treat_probability(y1[first], y0[1 - first]);
            let mut w = [false; 3];
            w[first] = true;
            w[2] = rng.random::<f64>() < pt;
            let w = Assignment::new(w.to_vec());
            let y: Vec<f64> = (0..3).map(|j| if w.get(j) { y1[j] } else { y0[j] }).collect();
            let treated: Vec<f64> = (0..3).filter(|&j| w.get(j)).map(|j| y[j]).collect();
            let sample_mean = treated.iter().sum::<f64>() / treated.len() as f64;
            Ok((sample_mean, ipw_treated_mean(&y, &w, &e)?))
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let sm: Vec<(f64, f64)> = draws.iter().map(|d| (d.0, q)).collect();
    let ipw: Vec<(f64, f64)> = draws.iter().map(|d| (d.1, q)).collect();
    Ok(TwoStageReport {
        sample_mean: McReport::from_pairs(&sm, 0, seed)?,
        ipw: McReport::from_pairs(&ipw, 0, seed)?,
        propensities: e,
    })
}

/// Bias of the synthetic control estimator in one experimental period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodBias {
    /// 0-based period index.
    pub period: usize,
    pub report: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBiasReport {
    pub periods: Vec<PeriodBias>,
    /// Largest covariate fit constant seen over replications.
    pub c_covariates: f64,
    /// Largest pre-period outcome fit constant seen over replications.
    pub c_outcomes: f64,
    /// Bias bound evaluated at `max(c_covariates, c_outcomes)`.
    pub bound: f64,
    pub bound_fit_term: f64,
    pub bound_noise_term: f64,
    pub seed: u64,
}

/// Per-period `(estimate, truth)` pairs and the two fit constants of one draw.
type DrawOutcome = (Vec<(f64, f64)>, f64, f64);

/// Designs on the pre-period control outcomes of each draw, then records
/// `τ̂_t - τ_t` for every experimental period, where
/// `τ_t = Σ f_j (Y_jt(1) - Y_jt(0))`.
pub fn synth_bias_study(
    spec: &FactorPanelSpec,
    f: &[f64],
    k: usize,
    mode: SynthMode,
    reps: usize,
    seed: u64,
) -> Result<SynthBiasReport> {
    spec.validate()?;
    ensure_len(spec.n(), f.len())?;
    if reps < 2 {
        return Err(DesignError::InvalidParameter("need at least two replications".into()));
    }
    let t = spec.periods();
    let t0 = spec.t0;
    let runs: Vec<Result<DrawOutcome>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng: DesignRng = stream(seed, r);
            let draw = spec.draw(&mut rng);
            let prob = SynthProblem::new(draw.control_panel()?, spec.x.clone(), f.to_vec(), k)?;
            let w = solve_synth_design(&prob, mode)?;
            let (cc, co) = check_fit_constants(&prob, &w)?;
            let mut per = Vec::with_capacity(t - t0);
            for s in t0..t {
                let y1: Vec<f64> = draw.y1.column(s).iter().copied().collect();
                let y0: Vec<f64> = draw.y0.column(s).iter().copied().collect();
                // treated units report Y(1), the rest Y(0)
                let observed: Vec<f64> = (0..spec.n()).map(|j| if w.u[j] > 0.0 { y1[j] } else { y0[j] }).collect();
                let est = sc_estimate(&observed, &w.u, &w.v)?;
                let tau = neumaier_sum((0..spec.n()).map(|j| f[j] * (y1[j] - y0[j])));
                per.push((est, tau));
            }
            Ok((per, cc, co))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let c_covariates = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let c_outcomes = runs.iter().map(|r| r.2).fold(0.0, f64::max);
    let periods = (0..t - t0)
        .map(|i| {
            let pairs: Vec<(f64, f64)> = runs.iter().map(|r| r.0[i]).collect();
            Ok(PeriodBias { period: t0 + i, report: McReport::from_pairs(&pairs, 0, seed)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let b = spec.bound_params(c_covariates.max(c_outcomes)).bound()?;
    Ok(SynthBiasReport {
        periods,
        c_covariates,
        c_outcomes,
        bound: b.total,
        bound_fit_term: b.fit_term,
        bound_noise_term: b.noise_term,
        seed,
    })
}
