//! Stratified designs with half of every stratum treated: the indicator
//! covariance matrix, the baseline quadratic form it induces, and the
//! sort-and-pair construction of optimal matched pairs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, DesignError, Result};
use crate::linalg::neumaier_sum;
use crate::oracle::{enumerate_even_partitions, enumerate_pairings};
use crate::types::StrataPartition;

/// Baselines `g_j = E[Y_j(1) + Y_j(0) | x_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineVector(Vec<f64>);

impl BaselineVector {
    pub fn new(g: Vec<f64>) -> Result<Self> {
        if g.len() < 2 {
            return Err(DesignError::InvalidParameter(format!("need at least 2 baselines, got {}", g.len())));
        }
        ensure_finite(&g, "baselines")?;
        Ok(Self(g))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub partition: StrataPartition,
    pub objective: f64,
}

fn check_even_strata(p: &StrataPartition) -> Result<()> {
    for (l, s) in p.strata().iter().enumerate() {
        if s.len() % 2 != 0 {
            return Err(DesignError::OddStratum { stratum: l + 1, size: s.len() });
        }
    }
    Ok(())
}

/// Covariance of the treatment indicators: `¼` on the diagonal,
/// `-1/(4(s-1))` within a stratum of size `s`, zero across strata.
pub fn stratified_cov_matrix(p: &StrataPartition) -> Result<DMatrix<f64>> {
    check_even_strata(p)?;
    let mut v = DMatrix::zeros(p.n(), p.n());
    for s in p.strata() {
        let off = -1.0 / (4.0 * (s.len() - 1) as f64);
        for &i in s {
            for &j in s {
                v[(i, j)] = if i == j { 0.25 } else { off };
            }
        }
    }
    Ok(v)
}

/// `gᵀ 𝕧 g`, evaluated per stratum as `¼ (Σ g² - (1/(s-1)) Σ_{i≠j} g_i g_j)`,
/// which equals `(s / (4(s-1))) Σ (g - ḡ)²`.
pub fn pairing_objective(g: &BaselineVector, p: &StrataPartition) -> Result<f64> {
    ensure_len(p.n(), g.n())?;
    check_even_strata(p)?;
    let g = g.as_slice();
    let terms = p.strata().iter().map(|s| {
        let size = s.len() as f64;
        let mean = s.iter().map(|&j| g[j]).sum::<f64>() / size;
        let ss = neumaier_sum(s.iter().map(|&j| (g[j] - mean).powi(2)));
        size / (4.0 * (size - 1.0)) * ss
    });
    Ok(neumaier_sum(terms))
}

/// `gᵀ 𝕧 g` through the explicit covariance matrix.
pub fn pairing_objective_matrix(g: &BaselineVector, p: &StrataPartition) -> Result<f64> {
    ensure_len(p.n(), g.n())?;
    let v = stratified_cov_matrix(p)?;
    let gv = DVector::from_column_slice(g.as_slice());
    Ok(gv.dot(&(&v * &gv)))
}

/// Sorts units by baseline, largest first with ties by index, and pairs
/// neighbours.
pub fn optimal_matched_pairs(g: &BaselineVector) -> Result<PairingResult> {
    let n = g.n();
    if !n.is_multiple_of(2) {
        return Err(DesignError::OddUnitCount { n });
    }
    let v = g.as_slice();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let partition = StrataPartition::new(n, order.chunks(2).map(<[usize]>::to_vec).collect())?;
    let objective = pairing_objective(g, &partition)?;
    Ok(PairingResult { partition, objective })
}

fn argmin(g: &BaselineVector, candidates: Vec<StrataPartition>) -> Result<PairingResult> {
    let objectives = candidates.par_iter().map(|p| pairing_objective(g, p)).collect::<Result<Vec<_>>>()?;
    let (best, objective) =
        objectives
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    Ok(PairingResult { partition: candidates[best].clone(), objective })
}

/// Minimum of the objective over every perfect matching.
pub fn best_pairing_by_enumeration(g: &BaselineVector) -> Result<PairingResult> {
    argmin(g, enumerate_pairings(g.n())?)
}

/// Minimum of the objective over every partition into even strata.
pub fn best_even_partition_by_enumeration(g: &BaselineVector) -> Result<PairingResult> {
    argmin(g, enumerate_even_partitions(g.n())?)
}

/// Empirical `(mse, variance, bias²)` of draws around `target`, with
/// population-style (divisor m) variance.
pub fn bias_variance_decompose(samples: &[f64], target: f64) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Err(DesignError::InvalidParameter("no samples".into()));
    }
    ensure_finite(samples, "samples")?;
    let m = samples.len() as f64;
    let mean = neumaier_sum(samples.iter().copied()) / m;
    let variance = neumaier_sum(samples.iter().map(|x| (x - mean).powi(2))) / m;
    let mse = neumaier_sum(samples.iter().map(|x| (x - target).powi(2))) / m;
    let bias = mean - target;
    Ok((mse, variance, bias * bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_estimator_moments, ConditioningEvent, EstimatorKind};
    use crate::rng::stream;
    use crate::types::{DesignSpec, ScienceTable};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn bv(g: &[f64]) -> BaselineVector {
        BaselineVector::new(g.to_vec()).unwrap()
    }

    fn pairs(n: usize, p: &[[usize; 2]]) -> StrataPartition {
        StrataPartition::from_one_based(n, &p.iter().map(|q| q.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn covariance_blocks() {
        let v = stratified_cov_matrix(&StrataPartition::trivial(6).unwrap()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(v[(i, j)], if i == j { 0.25 } else { -1.0 / 20.0 });
            }
        }
        let v = stratified_cov_matrix(&pairs(4, &[[1, 2], [3, 4]])).unwrap();
        assert_eq!(v[(0, 1)], -0.25);
        assert_eq!(v[(0, 2)], 0.0);
        assert_eq!(v[(1, 3)], 0.0);
        assert!(matches!(
            stratified_cov_matrix(&StrataPartition::new(4, vec![vec![0, 1, 2], vec![3]]).unwrap()),
            Err(DesignError::OddStratum { stratum: 1, size: 3 })
        ));
    }

    #[test]
    fn covariance_rows_sum_to_zero() {
        for s in [2usize, 4, 6, 8, 10] {
            let v = stratified_cov_matrix(&StrataPartition::trivial(s).unwrap()).unwrap();
            for i in 0..s {
                assert!(v.row(i).sum().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_matches_enumerated_indicator_covariance() {
        let part = StrataPartition::new(6, vec![vec![0, 3], vec![1, 2, 4, 5]]).unwrap();
        let pmf = crate::oracle::expand_design(&DesignSpec::half_treated_strata(part.clone()).unwrap()).unwrap();
        let v = stratified_cov_matrix(&part).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let both: f64 = pmf.support().iter().filter(|(w, _)| w.get(i) && w.get(j)).map(|(_, p)| p).sum();
                assert!((both - 0.25 - v[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn objective_examples() {
        let g = bv(&[10.0, 8.0, 6.0, 4.0]);
        assert!((pairing_objective(&g, &pairs(4, &[[1, 2], [3, 4]])).unwrap() - 2.0).abs() < 1e-12);
        assert!((pairing_objective(&g, &pairs(4, &[[1, 4], [2, 3]])).unwrap() - 10.0).abs() < 1e-12);
        let c = bv(&[3.0; 6]);
        assert_eq!(pairing_objective(&c, &StrataPartition::trivial(6).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn matched_pairs_examples() {
        let r = optimal_matched_pairs(&bv(&[4.0, 10.0, 2.0, 8.0])).unwrap();
        assert_eq!(r.partition.to_one_based(), vec![vec![2, 4], vec![1, 3]]);
        assert!((r.objective - 2.0).abs() < 1e-12);
        let r = optimal_matched_pairs(&bv(&[1.0; 6])).unwrap();
        assert_eq!(r.partition.to_one_based(), vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        assert_eq!(r.objective, 0.0);
        assert_eq!(optimal_matched_pairs(&bv(&[1.0, 2.0, 3.0])), Err(DesignError::OddUnitCount { n: 3 }));
    }

    #[test]
    fn sort_and_pair_matches_enumeration() {
        let mut rng = stream(6, 0);
        for n in [4usize, 6, 8] {
            for _ in 0..30 {
                let g = bv(&(0..n).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>());
                let fast = optimal_matched_pairs(&g).unwrap().objective;
                let brute = best_pairing_by_enumeration(&g).unwrap().objective;
                assert!((fast - brute).abs() < 1e-10);
                if n <= 6 {
                    let coarse = best_even_partition_by_enumeration(&g).unwrap().objective;
                    assert!((fast - coarse).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn closed_form_agrees_with_matrix_and_double_sum() {
        let mut rng = stream(7, 0);
        for _ in 0..100 {
            let n = 2 * rng.random_range(1..=6usize);
            let g = bv(&(0..n).map(|_| rng.random_range(-4.0..4.0)).collect::<Vec<_>>());
            let mut units: Vec<usize> = (0..n).collect();
            units.shuffle(&mut rng);
            let mut strata = Vec::new();
            let mut rest = units.as_slice();
            while !rest.is_empty() {
                let size = 2 * rng.random_range(1..=rest.len() / 2);
                strata.push(rest[..size].to_vec());
                rest = &rest[size..];
            }
            let p = StrataPartition::new(n, strata).unwrap();
            let closed = pairing_objective(&g, &p).unwrap();
            assert!((closed - pairing_objective_matrix(&g, &p).unwrap()).abs() < 1e-10);
            // the ordered-pair double sum counts each pair twice
            let gs = g.as_slice();
            let double_sum: f64 = p
                .strata()
                .iter()
                .map(|s| {
                    let k = s.len() as f64;
                    let mut acc = 0.0;
                    for &i in s {
                        for &j in s {
                            if i != j {
                                acc += (gs[i] - gs[j]).powi(2) / (k - 1.0);
                            }
                        }
                    }
                    0.25 * acc
                })
                .sum();
            assert!((double_sum - 2.0 * closed).abs() < 1e-9 * closed.max(1.0));
        }
    }

    #[test]
    fn bias_variance_examples() {
        assert_eq!(bias_variance_decompose(&[1.5, 1.5], 1.5).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(bias_variance_decompose(&[0.0, 2.0], 1.0).unwrap(), (1.0, 1.0, 0.0));
        assert_eq!(bias_variance_decompose(&[2.0, 2.0], 1.0).unwrap(), (1.0, 0.0, 1.0));
        assert!(bias_variance_decompose(&[], 0.0).is_err());
    }

    /// Each potential outcome is `mean ± spread` with equal probability.
    /// Exact MSE of DM around `τ_x` under a pairing, averaging over all
    /// sign patterns and all assignments.
    fn exact_pairing_mse(m1: &[f64], m0: &[f64], s1: &[f64], s0: &[f64], p: &StrataPartition) -> f64 {
        let n = m1.len();
        let tau_x = (0..n).map(|j| m1[j] - m0[j]).sum::<f64>() / n as f64;
        let d = DesignSpec::half_treated_strata(p.clone()).unwrap();
        let patterns = 1u32 << (2 * n);
        let mut total = 0.0;
        for signs in 0..patterns {
            let sign = |k: usize| if signs >> k & 1 == 1 { 1.0 } else { -1.0 };
            let y1 = (0..n).map(|j| m1[j] + sign(2 * j) * s1[j]).collect();
            let y0 = (0..n).map(|j| m0[j] + sign(2 * j + 1) * s0[j]).collect();
            let t = ScienceTable::new(y1, y0).unwrap();
            let mo = exact_estimator_moments(&d, &t, &EstimatorKind::Dm, ConditioningEvent::None).unwrap();
            total += mo.variance + (mo.mean - tau_x).powi(2);
        }
        total / patterns as f64
    }

    #[test]
    fn pairing_mse_differences_are_the_quadratic_form() {
        let mut rng = stream(8, 0);
        let n = 4;
        for _ in 0..5 {
            let m1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let s0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let g = bv(&(0..n).map(|j| m1[j] + m0[j]).collect::<Vec<_>>());
            let noise = 2.0 / (n * n) as f64 * (0..n).map(|j| s1[j].powi(2) + s0[j].powi(2)).sum::<f64>();
            let all = enumerate_pairings(n).unwrap();
            let mses: Vec<f64> = all.iter().map(|p| exact_pairing_mse(&m1, &m0, &s1, &s0, p)).collect();
            for (p, mse) in all.iter().zip(&mses) {
                let quad = 4.0 / (n * n) as f64 * pairing_objective(&g, p).unwrap();
                assert!((mse - noise - quad).abs() < 1e-10, "{mse} vs {}", noise + quad);
            }
            for i in 0..mses.len() {
                for j in 0..mses.len() {
                    let dq = pairing_objective(&g, &all[i]).unwrap() - pairing_objective(&g, &all[j]).unwrap();
                    assert!((mses[i] - mses[j] - 4.0 / 16.0 * dq).abs() < 1e-10);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn exchange_inequality(mut q in proptest::array::uniform4(-100.0f64..100.0)) {
            q.sort_by(|a, b| b.total_cmp(a));
            let [g1, g2, g3, g4] = q;
            prop_assert!((g1 - g4).powi(2) + (g2 - g3).powi(2) >= (g1 - g2).powi(2) + (g3 - g4).powi(2) - 1e-9);
        }

        #[test]
        fn mse_identity(samples in proptest::collection::vec(-50.0f64..50.0, 1..40), target in -10.0f64..10.0) {
            let (mse, var, b2) = bias_variance_decompose(&samples, target).unwrap();
            prop_assert!((mse - var - b2).abs() <= 1e-10 * mse.max(1.0));
        }
    }
}
