//! Probability mass evaluation and sampling for the supported designs.

use rand::seq::index;
use rand::Rng;

use crate::error::{ensure_len, DesignError, Result};
use crate::types::{Assignment, DesignSpec};

/// Binomial coefficient, exact in 128-bit integers.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `Π p_j^{w_j} (1 - p_j)^{1 - w_j}`.
pub fn bernoulli_pmf(p: &[f64], w: &Assignment) -> Result<f64> {
    ensure_len(p.len(), w.len())?;
    let mut prob = 1.0;
    for (j, (&pj, t)) in p.iter().zip(w.iter()).enumerate() {
        if !(pj > 0.0 && pj < 1.0) {
            return Err(DesignError::InvalidProbability { unit: j + 1, value: pj });
        }
        prob *= if t { pj } else { 1.0 - pj };
    }
    Ok(prob)
}

/// `1 / C(n, n1)` on assignments with exactly `n1` treated units, else 0.
pub fn crd_pmf(n: usize, n1: usize, w: &Assignment) -> Result<f64> {
    if n < 2 || n1 < 1 || n1 > n - 1 {
        return Err(DesignError::InvalidTreatedCount { n, n1 });
    }
    ensure_len(n, w.len())?;
    Ok(if w.n1() == n1 { 1.0 / binomial(n, n1) as f64 } else { 0.0 })
}

/// `η(w)` for any design.
pub fn design_pmf(d: &DesignSpec, w: &Assignment) -> Result<f64> {
    ensure_len(d.n(), w.len())?;
    match d {
        DesignSpec::Bernoulli { p } => bernoulli_pmf(p, w),
        DesignSpec::CompletelyRandomized { n, n1 } => crd_pmf(*n, *n1, w),
        DesignSpec::Stratified { partition, inner } => {
            let mut prob = 1.0;
            for (s, inner_design) in partition.strata().iter().zip(inner) {
                prob *= design_pmf(inner_design, &w.restrict(s))?;
            }
            Ok(prob)
        }
        DesignSpec::Explicit(pmf) => Ok(pmf.probability(w)),
    }
}

/// Draws one assignment vector from the design.
pub fn sample_assignment<R: Rng + ?Sized>(d: &DesignSpec, rng: &mut R) -> Assignment {
    match d {
        DesignSpec::Bernoulli { p } => Assignment::new(p.iter().map(|&pj| rng.random::<f64>() < pj).collect()),
        DesignSpec::CompletelyRandomized { n, n1 } => {
            let mut w = vec![false; *n];
            for j in index::sample(rng, *n, *n1) {
                w[j] = true;
            }
            Assignment::new(w)
        }
        DesignSpec::Stratified { partition, inner } => {
            let mut w = vec![false; partition.n()];
            for (s, inner_design) in partition.strata().iter().zip(inner) {
                let ws = sample_assignment(inner_design, rng);
                for (&unit, t) in s.iter().zip(ws.iter()) {
                    w[unit] = t;
                }
            }
            Assignment::new(w)
        }
        DesignSpec::Explicit(pmf) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let support = pmf.support();
            for (w, p) in support {
                acc += p;
                if u < acc {
                    return w.clone();
                }
            }
            // u landed in the rounding gap above the accumulated mass
            support
                .iter()
                .rev()
                .find(|(_, p)| *p > 0.0)
                .map(|(w, _)| w.clone())
                .expect("normalized pmf has positive mass")
        }
    }
}
