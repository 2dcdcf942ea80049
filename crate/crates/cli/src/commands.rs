//! One function per subcommand; each returns the `results` object of the
//! report.

use std::collections::BTreeMap;
use std::path::Path;

use expdesign::deterministic::{da_exhaustive, da_local_search, dopt_search, DaProblem, DoptMode};
use expdesign::estimators::{aggregate_estimate, dm_estimate, ipw_estimate, ols_fit};
use expdesign::oracle::{
    exact_estimator_moments, two_stage_expectation, two_stage_ipw_expectation, two_stage_marginal_propensities,
    ConditioningEvent, EstimatorKind, StageTwoPolicy,
};
use expdesign::robust::{
    additive_crd_risk, minimax_bernoulli, optimal_crd_split, symmetric_grid_scan, AdditiveModelSpec, BoxUncertainty,
};
use expdesign::simulation::{
    run_replications, stopping_rule_simulation, synth_bias_study, two_stage_simulation, DgpSpec, Estimand,
    EstimatorSpec, FactorPanelSpec, LinearModelSpec, NoiseKind,
};
use expdesign::stochastic::{
    best_even_partition_by_enumeration, best_pairing_by_enumeration, optimal_matched_pairs, BaselineVector,
    PairingResult,
};
use expdesign::synth::{
    check_fit_constants, solve_synth_design, BiasBoundParams, SynthMode, SynthProblem, SOLVER_SETTINGS,
};
use expdesign::{CovariateMatrix, DesignError, DesignSpec, StrataPartition};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, Result};
use crate::io::{parse_baselines, parse_covariates, parse_observed, parse_panel, parse_science_table};

pub fn dispatch(cmd: &Command, seed: u64) -> Result<Value> {
    match cmd {
        Command::MinimaxBernoulli(a) => minimax(a),
        Command::CrdRisk(a) => crd_risk(a),
        Command::MatchedPairs(a) => matched_pairs(a),
        Command::DaOpt(a) => da_opt(a, seed),
        Command::DOpt(a) => d_opt(a, seed),
        Command::SynthDesign(a) => synth_design(a),
        Command::BiasBound(a) => bias_bound(a),
        Command::Estimate(a) => estimate(a),
        Command::Oracle(a) => oracle(a),
        Command::Simulate(a) => simulate(a, seed),
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Design(DesignError::InvalidParameter(msg.into()))
}

fn one_based(units: &[usize]) -> Vec<usize> {
    units.iter().map(|j| j + 1).collect()
}

fn load_baselines(input: &BaselineInput) -> Result<Vec<f64>> {
    match (&input.g, &input.baselines) {
        (Some(g), None) => Ok(g.clone()),
        (None, Some(path)) => parse_baselines(path),
        (Some(_), Some(_)) => Err(bad("give either --g or --baselines, not both")),
        (None, None) => Err(bad("baselines required: --g or --baselines")),
    }
}

fn load_covariates(path: &Path, intercept: bool) -> Result<CovariateMatrix> {
    let x = parse_covariates(path)?;
    Ok(if intercept { x.with_intercept() } else { x })
}

/// `"1 2;3 4"` → 1-based strata.
fn parse_strata(n: usize, spec: &str) -> Result<StrataPartition> {
    let strata = spec
        .split(';')
        .map(|s| {
            s.split([' ', ','])
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(format!("strata '{spec}': {e}")))?;
    Ok(StrataPartition::from_one_based(n, &strata)?)
}

/// Partition from `--strata`, or consecutive pairs when absent.
fn strata_or_pairs(n: usize, strata: &Option<String>) -> Result<StrataPartition> {
    match strata {
        Some(s) => parse_strata(n, s),
        None => {
            if !n.is_multiple_of(2) {
                return Err(DesignError::OddUnitCount { n }.into());
            }
            Ok(StrataPartition::new(n, (0..n / 2).map(|i| vec![2 * i, 2 * i + 1]).collect())?)
        }
    }
}

fn build_design(a: &DesignArgs, n: usize) -> Result<DesignSpec> {
    Ok(match a.design {
        DesignKind::Crd => DesignSpec::crd(n, a.n1.unwrap_or(n / 2))?,
        DesignKind::Bernoulli => DesignSpec::bernoulli_uniform(n, a.p)?,
        DesignKind::MatchedPairs => DesignSpec::half_treated_strata(strata_or_pairs(n, &a.strata)?)?,
    })
}

fn pairing_json(r: &PairingResult) -> Value {
    json!({ "strata": r.partition.to_one_based(), "objective": r.objective })
}

fn minimax(a: &MinimaxArgs) -> Result<Value> {
    let bx = BoxUncertainty::new(a.b)?;
    let r = minimax_bernoulli(a.n, bx)?;
    let mut out = json!({
        "p": r.optimal_p[0],
        "optimal_p": r.optimal_p,
        "worst_case_risk": r.worst_case_risk,
        "worst_case_outcomes": r.worst_case_outcomes,
    });
    if a.scan {
        let grid: Vec<f64> = (1..=9).map(|i| f64::from(i) / 10.0).collect();
        let scan = symmetric_grid_scan(a.n, bx, &grid)?;
        out["scan"] = scan.iter().map(|(p, risk)| json!({ "p": p, "worst_case_risk": risk })).collect();
    }
    Ok(out)
}

fn crd_risk(a: &CrdRiskArgs) -> Result<Value> {
    let g = load_baselines(&a.input)?;
    let n = g.len();
    let model = AdditiveModelSpec::new(g, a.sigma2, 0.0, 0.0)?;
    if let Some(n1) = a.n1 {
        if n1 == 0 || n1 >= n {
            return Err(DesignError::InvalidTreatedCount { n, n1 }.into());
        }
        return Ok(json!({ "n1": n1, "n0": n - n1, "risk": additive_crd_risk(n1, n - n1, &model)? }));
    }
    let splits = (1..n)
        .map(|n1| Ok(json!({ "n1": n1, "risk": additive_crd_risk(n1, n - n1, &model)? })))
        .collect::<Result<Vec<_>>>()?;
    let balanced = optimal_crd_split(n).ok().map(|(n1, n0)| json!({ "n1": n1, "n0": n0 }));
    Ok(json!({ "splits": splits, "balanced_split": balanced }))
}

fn matched_pairs(a: &MatchedPairsArgs) -> Result<Value> {
    let g = BaselineVector::new(load_baselines(&a.input)?)?;
    let r = optimal_matched_pairs(&g)?;
    let mut out = json!({ "pairs": r.partition.to_one_based(), "objective": r.objective });
    if a.verify {
        let brute = best_pairing_by_enumeration(&g)?;
        out["brute_force"] = pairing_json(&brute);
        out["agrees"] = json!((brute.objective - r.objective).abs() <= 1e-10 * r.objective.abs().max(1.0));
    }
    Ok(out)
}

fn da_opt(a: &DaOptArgs, seed: u64) -> Result<Value> {
    let x = load_covariates(&a.covariates, a.intercept)?;
    let prob = DaProblem::new(x)?;
    let sol = match a.mode {
        DaMode::Exhaustive => da_exhaustive(&prob)?,
        DaMode::Local => da_local_search(&prob, a.restarts, seed)?,
    };
    let treated: Vec<usize> = (0..prob.n()).filter(|&j| sol.assignment.get(j)).collect();
    Ok(json!({
        "assignment": sol.assignment.to_bits(),
        "treated": one_based(&treated),
        "n1": sol.assignment.n1(),
        "objective": sol.objective,
        "variance_over_sigma2": 1.0 / sol.objective,
    }))
}

fn d_opt(a: &DOptArgs, seed: u64) -> Result<Value> {
    let x = parse_covariates(&a.covariates)?;
    let mode = match a.mode {
        SearchMode::Exhaustive => DoptMode::Exhaustive,
        SearchMode::Greedy => DoptMode::GreedyExchange { random_starts: a.random_starts },
    };
    let s = dopt_search(&x, a.k, mode, seed)?;
    Ok(json!({ "subset": one_based(&s.subset), "log_det": s.objective, "det": s.objective.exp() }))
}

fn synth_design(a: &SynthArgs) -> Result<Value> {
    let panel = parse_panel(&a.panel, a.t0)?;
    let x = a.covariates.as_deref().map(parse_covariates).transpose()?;
    let n = panel.n();
    let f = a.target.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let prob = SynthProblem::new(panel, x, f, a.k)?;
    let mode = match a.mode {
        SearchMode::Exhaustive => SynthMode::Exhaustive,
        SearchMode::Greedy => SynthMode::Greedy,
    };
    let w = solve_synth_design(&prob, mode)?;
    let (c_cov, c_out) = check_fit_constants(&prob, &w)?;
    Ok(json!({
        "treated_set": one_based(&w.treated_set),
        "u": w.u,
        "v": w.v,
        "u_loss": w.u_loss,
        "v_loss": w.v_loss,
        "fit_loss": w.fit_loss,
        "c_covariates": c_cov,
        "c_outcomes": c_out,
        "solver": SOLVER_SETTINGS,
    }))
}

fn bias_bound(a: &BiasBoundArgs) -> Result<Value> {
    let p = BiasBoundParams {
        beta_bar: a.beta_bar,
        lambda_bar: a.lambda_bar,
        r: a.r,
        d: a.d,
        zeta_lower: a.zeta_lower,
        c: a.c,
        sigma_bar: a.sigma_bar,
        t0: a.t0,
        n: a.n,
    };
    let b = p.bound()?;
    Ok(json!({ "bound": b.total, "fit_term": b.fit_term, "noise_term": b.noise_term }))
}

/// Groups units by stratum label, labels in ascending order.
fn partition_from_labels(labels: &[i64]) -> Result<(Vec<i64>, StrataPartition)> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (j, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().push(j);
    }
    let keys = groups.keys().copied().collect();
    Ok((keys, StrataPartition::new(labels.len(), groups.into_values().collect())?))
}

fn estimate(a: &EstimateArgs) -> Result<Value> {
    let data = parse_observed(&a.data)?;
    let (w, y) = (&data.w, &data.y);
    let mut out = json!({ "n": w.len(), "n1": w.n1() });
    match a.method {
        Method::Dm => out["estimate"] = json!(dm_estimate(y, w)?),
        Method::Ipw => {
            let e = match (&data.propensity, a.p) {
                (Some(e), _) => e.clone(),
                (None, Some(p)) => vec![p; w.len()],
                (None, None) => return Err(bad("IPW needs a propensity column or --p")),
            };
            out["estimate"] = json!(ipw_estimate(y, w, &e)?);
        }
        Method::Aggregate => {
            let labels = data.strata.as_ref().ok_or_else(|| bad("aggregate estimate needs a stratum column"))?;
            let (keys, part) = partition_from_labels(labels)?;
            let per: Vec<Value> = keys
                .iter()
                .zip(part.strata())
                .map(|(k, s)| {
                    let ys: Vec<f64> = s.iter().map(|&j| y[j]).collect();
                    Ok(json!({ "stratum": k, "size": s.len(), "dm": dm_estimate(&ys, &w.restrict(s))? }))
                })
                .collect::<Result<_>>()?;
            out["estimate"] = json!(aggregate_estimate(y, w, &part)?);
            out["strata"] = json!(per);
        }
        Method::Ols => {
            let x = match &a.covariates {
                Some(p) => parse_covariates(p)?.with_intercept(),
                None => CovariateMatrix::intercept_only(w.len())?,
            };
            let fit = ols_fit(w, &x, y, a.sigma2)?;
            out["estimate"] = json!(fit.tau_hat());
            out["std_error"] = json!(fit.covariance[(0, 0)].sqrt());
            out["beta_hat"] = json!(fit.beta_hat().as_slice());
        }
    }
    Ok(out)
}

fn oracle(a: &OracleArgs) -> Result<Value> {
    match a.check {
        OracleCheck::Moments => {
            let path = a.table.as_ref().ok_or_else(|| bad("--table is required for moments"))?;
            let t = parse_science_table(path)?;
            let d = build_design(&a.design, t.n())?;
            let kind = match a.estimator {
                EstimatorArg::Dm => EstimatorKind::Dm,
                EstimatorArg::Ipw => EstimatorKind::Ipw,
                EstimatorArg::Aggregate => EstimatorKind::Aggregate(strata_or_pairs(t.n(), &a.design.strata)?),
            };
            let cond = match (a.estimator, a.design.design) {
                (EstimatorArg::Dm, DesignKind::Bernoulli) => ConditioningEvent::NonDegenerate,
                _ => ConditioningEvent::None,
            };
            let m = exact_estimator_moments(&d, &t, &kind, cond)?;
            let ate = t.sample_ate();
            Ok(json!({
                "mean": m.mean,
                "variance": m.variance,
                "conditioning_mass": m.conditioning_mass,
                "sample_ate": ate,
                "bias": m.mean - ate,
            }))
        }
        OracleCheck::TwoStage => Ok(json!({
            "sample_mean_adaptive": two_stage_expectation(a.q, StageTwoPolicy::Adaptive)?,
            "sample_mean_coin_flip": two_stage_expectation(a.q, StageTwoPolicy::CoinFlip)?,
            "ipw_adaptive": two_stage_ipw_expectation(a.q, StageTwoPolicy::Adaptive)?,
            "propensities_adaptive": two_stage_marginal_propensities(a.q, StageTwoPolicy::Adaptive)?,
            "target": a.q,
        })),
        OracleCheck::Pairings => {
            let g = BaselineVector::new(load_baselines(&a.baselines)?)?;
            let mut out = json!({
                "sort_and_pair": pairing_json(&optimal_matched_pairs(&g)?),
                "best_pairing": pairing_json(&best_pairing_by_enumeration(&g)?),
            });
            if let Ok(p) = best_even_partition_by_enumeration(&g) {
                out["best_even_partition"] = pairing_json(&p);
            }
            Ok(out)
        }
    }
}

fn noise_kind(n: NoiseArg) -> NoiseKind {
    match n {
        NoiseArg::Gaussian => NoiseKind::Gaussian,
        NoiseArg::Rademacher => NoiseKind::Rademacher,
    }
}

fn simulate(a: &SimulateArgs, seed: u64) -> Result<Value> {
    let estimand = match a.estimand {
        EstimandArg::Sample => Estimand::Sample,
        EstimandArg::Population => Estimand::Population,
    };
    let table_study = |dgp: DgpSpec| -> Result<Value> {
        let n = dgp.n();
        let design = build_design(&a.design, n)?;
        let est = match a.method {
            Method::Dm => EstimatorSpec::Dm,
            Method::Ipw => EstimatorSpec::Ipw,
            Method::Aggregate => EstimatorSpec::Aggregate(strata_or_pairs(n, &a.design.strata)?),
            Method::Ols => EstimatorSpec::Ols,
        };
        Ok(serde_json::to_value(run_replications(&dgp, &design, &est, estimand, a.reps, seed)?)?)
    };
    match a.study {
        Study::Additive => {
            let g = load_baselines(&a.baselines)?;
            let model = AdditiveModelSpec::new(g, a.sigma2, a.alpha1, a.alpha0)?;
            table_study(DgpSpec::Additive { model, noise: noise_kind(a.noise) })
        }
        Study::Linear => {
            let path = a.covariates.as_ref().ok_or_else(|| bad("linear study needs --covariates"))?;
            let x = parse_covariates(path)?;
            let beta = a.beta.clone().ok_or_else(|| bad("linear study needs --beta"))?;
            table_study(DgpSpec::Linear(LinearModelSpec::new(a.tau, beta, x, a.sigma, noise_kind(a.noise))?))
        }
        Study::Stopping => Ok(serde_json::to_value(stopping_rule_simulation(a.threshold, a.horizon, a.reps, seed)?)?),
        Study::TwoStage => {
            let policy = match a.policy {
                PolicyArg::Adaptive => StageTwoPolicy::Adaptive,
                PolicyArg::CoinFlip => StageTwoPolicy::CoinFlip,
            };
            let mut out = serde_json::to_value(two_stage_simulation(a.q, policy, a.reps, seed)?)?;
            out["exact_sample_mean"] = json!(two_stage_expectation(a.q, policy)?);
            Ok(out)
        }
        Study::SynthBias => {
            let spec = FactorPanelSpec::alternating_fixture(a.units, a.t0, a.post, a.sigma, noise_kind(a.noise), seed)?;
            let f = vec![1.0 / a.units as f64; a.units];
            let mode = match a.mode {
                SearchMode::Exhaustive => SynthMode::Exhaustive,
                SearchMode::Greedy => SynthMode::Greedy,
            };
            Ok(serde_json::to_value(synth_bias_study(&spec, &f, a.k, mode, a.reps, seed)?)?)
        }
    }
}
