//! Exhaustive enumeration engines: exact design moments and risks over
//! every assignment, every pairing or even partition, every k-subset, and
//! every sample path of the two-stage adaptive experiment.
//!
//! Size caps are hard errors. Nothing here is approximate.

use crate::designs::{binomial, design_pmf};
use crate::error::{ensure_len, DesignError, Result};
use crate::estimators::{aggregate_estimate, dm_estimate, ipw_estimate};
use crate::linalg::neumaier_sum;
use crate::types::{Assignment, DesignPmf, DesignSpec, ScienceTable, StrataPartition, MAX_EXPLICIT_UNITS};

/// Largest n for which moments and risks are enumerated.
pub const MAX_ENUM_UNITS: usize = 16;
/// Largest n for which perfect matchings are enumerated.
pub const MAX_PAIRING_UNITS: usize = 12;
/// Largest n for which even-stratum partitions are enumerated.
pub const MAX_PARTITION_UNITS: usize = 8;
/// Largest number of k-subsets an enumeration may produce.
pub const MAX_SUBSETS: u128 = 1_000_000;

/// Event the design is conditioned on before taking moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningEvent {
    None,
    /// At least one treated and one control unit.
    NonDegenerate,
    FixedN1(usize),
}

impl ConditioningEvent {
    pub fn holds(&self, w: &Assignment) -> bool {
        match *self {
            ConditioningEvent::None => true,
            ConditioningEvent::NonDegenerate => w.n1() != 0 && w.n0() != 0,
            ConditioningEvent::FixedN1(k) => w.n1() == k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    /// Probability of the conditioning event.
    pub conditioning_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    Dm,
    /// IPW with the design's marginal propensities.
    Ipw,
    Aggregate(StrataPartition),
}

impl EstimatorKind {
    pub fn evaluate(&self, y_obs: &[f64], w: &Assignment, propensities: &[f64]) -> Result<f64> {
        match self {
            EstimatorKind::Dm => dm_estimate(y_obs, w),
            EstimatorKind::Ipw => ipw_estimate(y_obs, w, propensities),
            EstimatorKind::Aggregate(p) => aggregate_estimate(y_obs, w, p),
        }
    }
}

/// Materializes any design as an explicit pmf over its positive-mass vectors.
pub fn expand_design(d: &DesignSpec) -> Result<DesignPmf> {
    let n = d.n();
    if n > MAX_EXPLICIT_UNITS {
        return Err(DesignError::SizeCapExceeded { what: "design expansion", size: n, cap: MAX_EXPLICIT_UNITS });
    }
    d.validate()?;
    if let DesignSpec::Explicit(pmf) = d {
        return Ok(pmf.clone());
    }
    let mut support = Vec::new();
    for mask in 0..(1u64 << n) {
        let w = Assignment::from_mask(mask, n);
        let p = design_pmf(d, &w)?;
        if p > 0.0 {
            support.push((w, p));
        }
    }
    DesignPmf::new(n, support)
}

fn enumerable(d: &DesignSpec) -> Result<DesignPmf> {
    if d.n() > MAX_ENUM_UNITS {
        return Err(DesignError::SizeCapExceeded { what: "assignment enumeration", size: d.n(), cap: MAX_ENUM_UNITS });
    }
    expand_design(d)
}

/// Exact mean and variance of an estimator over the (conditioned) design.
pub fn exact_estimator_moments(
    d: &DesignSpec,
    t: &ScienceTable,
    estimator: &EstimatorKind,
    cond: ConditioningEvent,
) -> Result<ExactMoments> {
    ensure_len(d.n(), t.n())?;
    let pmf = enumerable(d)?;
    let e = d.marginal_propensities();
    let mut values = Vec::with_capacity(pmf.support().len());
    let mut masses = Vec::with_capacity(pmf.support().len());
    for (w, p) in pmf.support() {
        if !cond.holds(w) {
            continue;
        }
        let y = t.observed(w)?;
        values.push(estimator.evaluate(&y, w, &e)?);
        masses.push(*p);
    }
    let mass = neumaier_sum(masses.iter().copied());
    if mass <= 0.0 {
        return Err(DesignError::ZeroMassConditioning);
    }
    let mean = neumaier_sum(values.iter().zip(&masses).map(|(v, p)| v * p)) / mass;
    let variance = neumaier_sum(values.iter().zip(&masses).map(|(v, p)| p * (v - mean).powi(2))) / mass;
    Ok(ExactMoments { mean, variance: variance.max(0.0), conditioning_mass: mass })
}

/// `Σ_w η(w) L(w)` over a design.
pub fn exact_risk<F>(d: &DesignSpec, loss: F) -> Result<f64>
where
    F: Fn(&Assignment) -> f64,
{
    let pmf = enumerable(d)?;
    Ok(risk_under_pmf(&pmf, loss))
}

/// `Σ_w η(w) L(w)` for an explicit pmf.
pub fn risk_under_pmf<F>(pmf: &DesignPmf, loss: F) -> f64
where
    F: Fn(&Assignment) -> f64,
{
    neumaier_sum(pmf.support().iter().map(|(w, p)| p * loss(w)))
}

/// Fallible variant of [`exact_risk`] for losses built from estimators.
pub fn try_exact_risk<F>(d: &DesignSpec, loss: F) -> Result<f64>
where
    F: Fn(&Assignment) -> Result<f64>,
{
    let pmf = enumerable(d)?;
    let terms = pmf.support().iter().map(|(w, p)| loss(w).map(|l| p * l)).collect::<Result<Vec<_>>>()?;
    Ok(neumaier_sum(terms))
}

fn require_even(n: usize) -> Result<()> {
    if !n.is_multiple_of(2) || n == 0 {
        return Err(DesignError::OddUnitCount { n });
    }
    Ok(())
}

/// Every perfect matching of `n` units, each once.
pub fn enumerate_pairings(n: usize) -> Result<Vec<StrataPartition>> {
    require_even(n)?;
    if n > MAX_PAIRING_UNITS {
        return Err(DesignError::SizeCapExceeded { what: "pairing enumeration", size: n, cap: MAX_PAIRING_UNITS });
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n / 2);
    pair_up(&mut (0..n).collect(), &mut current, &mut out, n);
    Ok(out)
}

fn pair_up(rest: &mut Vec<usize>, current: &mut Vec<Vec<usize>>, out: &mut Vec<StrataPartition>, n: usize) {
    if rest.is_empty() {
        out.push(StrataPartition::new(n, current.clone()).expect("matching covers every unit"));
        return;
    }
    let first = rest.remove(0);
    for i in 0..rest.len() {
        let partner = rest.remove(i);
        current.push(vec![first, partner]);
        pair_up(rest, current, out, n);
        current.pop();
        rest.insert(i, partner);
    }
    rest.insert(0, first);
}

/// Every partition of `n` units into strata of even size.
pub fn enumerate_even_partitions(n: usize) -> Result<Vec<StrataPartition>> {
    require_even(n)?;
    if n > MAX_PARTITION_UNITS {
        return Err(DesignError::SizeCapExceeded { what: "partition enumeration", size: n, cap: MAX_PARTITION_UNITS });
    }
    let mut out = Vec::new();
    even_blocks(&(0..n).collect::<Vec<_>>(), &mut Vec::new(), &mut out, n);
    Ok(out)
}

fn even_blocks(rest: &[usize], current: &mut Vec<Vec<usize>>, out: &mut Vec<StrataPartition>, n: usize) {
    let Some((&first, others)) = rest.split_first() else {
        out.push(StrataPartition::new(n, current.clone()).expect("blocks cover every unit"));
        return;
    };
    let m = others.len();
    // the block holding `first` takes an odd number of the remaining units
    for mask in 0u32..(1 << m) {
        if mask.count_ones() % 2 == 0 {
            continue;
        }
        let mut block = vec![first];
        let mut remaining = Vec::with_capacity(m);
        for (i, &u) in others.iter().enumerate() {
            if mask >> i & 1 == 1 {
                block.push(u);
            } else {
                remaining.push(u);
            }
        }
        current.push(block);
        even_blocks(&remaining, current, out, n);
        current.pop();
    }
}

/// Lexicographic iterator over the k-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct KSubsets {
    n: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for KSubsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let k = current.len();
        let mut succ = current.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if succ[i] < self.n - k + i {
                succ[i] += 1;
                for j in (i + 1)..k {
                    succ[j] = succ[j - 1] + 1;
                }
                self.next = Some(succ);
                break;
            }
        }
        Some(current)
    }
}

/// All `C(n, k)` subsets in lexicographic order.
pub fn enumerate_k_subsets(n: usize, k: usize) -> Result<KSubsets> {
    if k == 0 || k > n {
        return Err(DesignError::InvalidParameter(format!("subset size k = {k} must satisfy 0 < k <= n = {n}")));
    }
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(DesignError::CombinatorialOverflow { count, cap: MAX_SUBSETS });
    }
    Ok(KSubsets { n, next: Some((0..k).collect()) })
}

/// How unit 3 is assigned in the two-stage experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTwoPolicy {
    /// Follow the arm that did better in stage one; split ties evenly.
    Adaptive,
    /// Fair coin regardless of stage-one outcomes.
    CoinFlip,
}

impl StageTwoPolicy {
    /// Probability unit 3 is treated given the stage-one treated and control
    /// outcomes.
    pub fn treat_probability(&self, treated_outcome: f64, control_outcome: f64) -> f64 {
        match self {
            StageTwoPolicy::CoinFlip => 0.5,
            StageTwoPolicy::Adaptive => {
                if treated_outcome > control_outcome {
                    1.0
                } else if treated_outcome < control_outcome {
                    0.0
                } else {
                    0.5
                }
            }
        }
    }
}

/// One complete trajectory of the two-stage experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStagePath {
    pub probability: f64,
    pub w: Assignment,
    pub y_obs: Vec<f64>,
}

impl TwoStagePath {
    /// Mean outcome of the treated units.
    pub fn treated_mean(&self) -> f64 {
        let (s, c) =
            self.w.iter().zip(&self.y_obs).filter(|(t, _)| *t).fold((0.0, 0usize), |(s, c), (_, y)| (s + y, c + 1));
        s / c as f64
    }
}

fn check_outcome_probability(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DesignError::InvalidParameter(format!("outcome probability must lie in [0, 1], got {q}")));
    }
    Ok(())
}

/// Every path of the three-unit experiment: stage one treats exactly one of
/// units 1 and 2, stage two assigns unit 3 by `policy`. All six potential
/// outcomes are i.i.d. Bernoulli(q).
pub fn two_stage_paths(q: f64, policy: StageTwoPolicy) -> Result<Vec<TwoStagePath>> {
    check_outcome_probability(q)?;
    let mut paths = Vec::new();
    for first_treated in [0usize, 1] {
        for outcomes in 0u32..64 {
            // bits 2j and 2j+1 hold y_j(1) and y_j(0)
            let bit = |k: u32| (outcomes >> k & 1) as f64;
            let ones = outcomes.count_ones() as i32;
            let p_outcomes = q.powi(ones) * (1.0 - q).powi(6 - ones);
            let y1 = [bit(0), bit(2), bit(4)];
            let y0 = [bit(1), bit(3), bit(5)];
            let other = 1 - first_treated;
            let treated_outcome = y1[first_treated];
            let control_outcome = y0[other];
            let pt = policy.treat_probability(treated_outcome, control_outcome);
            for (third, p3) in [(true, pt), (false, 1.0 - pt)] {
                if p3 == 0.0 {
                    continue;
                }
                let mut w = [false; 3];
                w[first_treated] = true;
                w[2] = third;
                let y_obs = (0..3).map(|j| if w[j] { y1[j] } else { y0[j] }).collect();
                paths.push(TwoStagePath { probability: 0.5 * p_outcomes * p3, w: Assignment::new(w.to_vec()), y_obs });
            }
        }
    }
    Ok(paths)
}

/// Exact `E[μ̂(1)]` of the treated sample mean under `policy`.
pub fn two_stage_expectation(q: f64, policy: StageTwoPolicy) -> Result<f64> {
    let paths = two_stage_paths(q, policy)?;
    Ok(neumaier_sum(paths.iter().map(|p| p.probability * p.treated_mean())))
}

/// Exact `E[μ̂(1)]` for the adaptive stage-two rule.
pub fn two_stage_adaptive_expectation(q: f64) -> Result<f64> {
    two_stage_expectation(q, StageTwoPolicy::Adaptive)
}

/// Marginal treatment probabilities of the three units over the path tree.
pub fn two_stage_marginal_propensities(q: f64, policy: StageTwoPolicy) -> Result<Vec<f64>> {
    let paths = two_stage_paths(q, policy)?;
    Ok((0..3).map(|j| neumaier_sum(paths.iter().filter(|p| p.w.get(j)).map(|p| p.probability))).collect())
}

/// `(1/n) Σ Y_j W_j / e_j`, the IPW estimate of `E[Y(1)]`.
pub fn ipw_treated_mean(y_obs: &[f64], w: &Assignment, propensities: &[f64]) -> Result<f64> {
    ensure_len(w.len(), y_obs.len())?;
    ensure_len(w.len(), propensities.len())?;
    if let Some((j, &e)) = propensities.iter().enumerate().find(|(_, &e)| !(e > 0.0 && e <= 1.0)) {
        return Err(DesignError::PositivityViolated { unit: j + 1, value: e });
    }
    let n = w.len() as f64;
    Ok(neumaier_sum(w.iter().zip(y_obs).zip(propensities).filter(|((t, _), _)| *t).map(|((_, y), e)| y / e)) / n)
}

/// Exact expectation of [`ipw_treated_mean`] with path-tree marginals.
pub fn two_stage_ipw_expectation(q: f64, policy: StageTwoPolicy) -> Result<f64> {
    let paths = two_stage_paths(q, policy)?;
    let e = two_stage_marginal_propensities(q, policy)?;
    let terms = paths
        .iter()
        .map(|p| ipw_treated_mean(&p.y_obs, &p.w, &e).map(|v| p.probability * v))
        .collect::<Result<Vec<_>>>()?;
    Ok(neumaier_sum(terms))
}
