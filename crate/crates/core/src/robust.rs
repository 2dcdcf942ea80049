//! Minimax designs: risk of the completely randomized design under the
//! additive outcome model, permutation symmetrization of designs, and the
//! worst-case IPW risk of Bernoulli designs over a box of outcomes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, DesignError, Result};
use crate::estimators::dm_estimate;
use crate::linalg::neumaier_sum;
use crate::oracle::risk_under_pmf;
use crate::types::{Assignment, DesignPmf, Permutation, ScienceTable};

/// Largest n for which [`symmetrize`] enumerates all n! permutations.
pub const MAX_SYMMETRIZE_UNITS: usize = 8;

/// `Y_j(w) = α_w + g_j + ε_jw` with `Var(ε_jw) = σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModelSpec {
    pub g: Vec<f64>,
    pub sigma2: f64,
    pub alpha1: f64,
    pub alpha0: f64,
}

impl AdditiveModelSpec {
    pub fn new(g: Vec<f64>, sigma2: f64, alpha1: f64, alpha0: f64) -> Result<Self> {
        if g.is_empty() {
            return Err(DesignError::InvalidParameter("additive model needs at least one unit".into()));
        }
        ensure_finite(&g, "unit effects")?;
        ensure_finite(&[alpha1, alpha0], "arm effects")?;
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(DesignError::InvalidParameter(format!("noise variance must be finite and >= 0, got {sigma2}")));
        }
        Ok(Self { g, sigma2, alpha1, alpha0 })
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// `α₁ - α₀`.
    pub fn tau(&self) -> f64 {
        self.alpha1 - self.alpha0
    }
}

/// Potential outcomes confined to `[-b, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxUncertainty(f64);

impl BoxUncertainty {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(DesignError::InvalidParameter(format!("box half-width b must be finite and > 0, got {b}")));
        }
        Ok(Self(b))
    }

    pub fn b(&self) -> f64 {
        self.0
    }

    /// Whether every potential outcome of `t` lies in the box.
    pub fn contains(&self, t: &ScienceTable) -> bool {
        t.y1().iter().chain(t.y0()).all(|y| y.abs() <= self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub optimal_p: Vec<f64>,
    pub worst_case_risk: f64,
    pub worst_case_outcomes: String,
}

/// Expected squared error of DM around `α₁ - α₀` for one assignment,
/// averaged over the noise: `(ḡ_T - ḡ_C)² + σ² (1/n1 + 1/n0)`.
pub fn additive_dm_loss(w: &Assignment, m: &AdditiveModelSpec) -> Result<f64> {
    let diff = dm_estimate(&m.g, w)?;
    Ok(diff * diff + m.sigma2 * (1.0 / w.n1() as f64 + 1.0 / w.n0() as f64))
}

/// Closed-form risk of the completely randomized design with `n1` treated
/// units and DM:
/// `(1/n1 + 1/n0) ((1/n) Σ g² - (1/(n(n-1))) Σ_{i≠j} g_i g_j + σ²)`.
///
/// The bracket is the sample variance of `g`, evaluated in centered form.
pub fn additive_crd_risk(n1: usize, n0: usize, m: &AdditiveModelSpec) -> Result<f64> {
    let n = n1 + n0;
    if n < 2 || n1 == 0 || n0 == 0 {
        return Err(DesignError::InvalidTreatedCount { n, n1 });
    }
    ensure_len(n, m.n())?;
    let mean = neumaier_sum(m.g.iter().copied()) / n as f64;
    let s2 = neumaier_sum(m.g.iter().map(|g| (g - mean).powi(2))) / (n - 1) as f64;
    Ok((1.0 / n1 as f64 + 1.0 / n0 as f64) * (s2 + m.sigma2))
}

/// The balanced split `(n/2, n/2)`.
pub fn optimal_crd_split(n: usize) -> Result<(usize, usize)> {
    if !n.is_multiple_of(2) || n < 2 {
        return Err(DesignError::OddUnitCount { n });
    }
    Ok((n / 2, n / 2))
}

/// `η̃(w) = (1/n!) Σ_π η(π(w))`.
pub fn symmetrize(d: &DesignPmf) -> Result<DesignPmf> {
    let n = d.n();
    if n > MAX_SYMMETRIZE_UNITS {
        return Err(DesignError::SizeCapExceeded { what: "symmetrization", size: n, cap: MAX_SYMMETRIZE_UNITS });
    }
    let perms = Permutation::all(n);
    let weight = 1.0 / perms.len() as f64;
    let mut dense = vec![0.0; 1usize << n];
    for (w, p) in d.support() {
        let m = w.mask();
        for pi in &perms {
            dense[pi.apply_mask(m) as usize] += p * weight;
        }
    }
    DesignPmf::from_dense(n, &dense)
}

fn check_positivity(p: &[f64]) -> Result<()> {
    if let Some((j, &v)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
        return Err(DesignError::PositivityViolated { unit: j + 1, value: v });
    }
    Ok(())
}

/// Exact IPW squared-error risk of the Bernoulli design with probabilities
/// `p`: `(1/n²) Σ_j (y_j(1)(1 - p_j) + y_j(0) p_j)² / (p_j (1 - p_j))`.
pub fn reduced_bernoulli_objective(p: &[f64], t: &ScienceTable) -> Result<f64> {
    ensure_len(t.n(), p.len())?;
    check_positivity(p)?;
    let n = p.len() as f64;
    let terms = p.iter().zip(t.y1().iter().zip(t.y0())).map(|(&pj, (&y1, &y0))| {
        let a = y1 * (1.0 - pj) + y0 * pj;
        a * a / (pj * (1.0 - pj))
    });
    Ok(neumaier_sum(terms) / (n * n))
}

/// `sup` of the IPW risk over the box: `(b²/n²) Σ_j 1/(p_j (1 - p_j))`,
/// attained at `y_j(1) = y_j(0) = ±b`.
pub fn bernoulli_worst_case_risk(p: &[f64], bx: BoxUncertainty) -> Result<f64> {
    if p.is_empty() {
        return Err(DesignError::InvalidParameter("no units".into()));
    }
    check_positivity(p)?;
    let n = p.len() as f64;
    let s = neumaier_sum(p.iter().map(|&pj| 1.0 / (pj * (1.0 - pj))));
    Ok(bx.b() * bx.b() * s / (n * n))
}

/// The balanced Bernoulli design and its worst-case risk `4b²/n`.
pub fn minimax_bernoulli(n: usize, bx: BoxUncertainty) -> Result<MinimaxResult> {
    if n == 0 {
        return Err(DesignError::InvalidParameter("n must be >= 1".into()));
    }
    let optimal_p = vec![0.5; n];
    let worst_case_risk = bernoulli_worst_case_risk(&optimal_p, bx)?;
    Ok(MinimaxResult {
        optimal_p,
        worst_case_risk,
        worst_case_outcomes: format!("y_j(1) = y_j(0) = +/-{} for every unit (sign arbitrary per unit)", bx.b()),
    })
}

/// Worst-case risk along the diagonal `p_j = q` for each grid value.
pub fn symmetric_grid_scan(n: usize, bx: BoxUncertainty, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter().map(|&q| bernoulli_worst_case_risk(&vec![q; n], bx).map(|r| (q, r))).collect()
}

/// `max_{g ∈ G₀ⁿ} Σ_w η(w) L(w, g)` with the additive DM loss, over the
/// permutation-closed grid built from the coordinate values `g0`.
///
/// The design must not put mass on all-treated or all-control vectors.
pub fn worst_case_additive_risk(d: &DesignPmf, g0: &[f64], sigma2: f64) -> Result<f64> {
    let n = d.n();
    if g0.is_empty() {
        return Err(DesignError::InvalidParameter("empty coordinate grid".into()));
    }
    ensure_finite(g0, "coordinate grid")?;
    if let Some((w, _)) = d.support().iter().find(|(w, p)| *p > 0.0 && (w.n1() == 0 || w.n0() == 0)) {
        return Err(DesignError::InvalidDesign(format!("support vector {:?} leaves one arm empty", w.to_bits())));
    }
    let k = g0.len();
    let points = k.checked_pow(n as u32).filter(|&c| c <= 1 << 20).ok_or(DesignError::SizeCapExceeded {
        what: "uncertainty grid",
        size: n,
        cap: 20,
    })?;
    let risks: Vec<f64> = (0..points)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let g: Vec<f64> = (0..n)
                .map(|_| {
                    let v = g0[rest % k];
                    rest /= k;
                    v
                })
                .collect();
            let m = AdditiveModelSpec { g, sigma2, alpha1: 0.0, alpha0: 0.0 };
            risk_under_pmf(d, |w| additive_dm_loss(w, &m).expect("support checked non-degenerate"))
        })
        .collect();
    Ok(risks.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::binomial;
    use crate::oracle::{exact_risk, expand_design};
    use crate::rng::stream;
    use crate::types::DesignSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn model(g: Vec<f64>, sigma2: f64) -> AdditiveModelSpec {
        AdditiveModelSpec::new(g, sigma2, 0.0, 0.0).unwrap()
    }

    /// The risk formula as written, with the explicit double sum.
    fn literal_crd_risk(n1: usize, n0: usize, m: &AdditiveModelSpec) -> f64 {
        let n = (n1 + n0) as f64;
        let sq: f64 = m.g.iter().map(|g| g * g).sum();
        let mut cross = 0.0;
        for (i, gi) in m.g.iter().enumerate() {
            for (j, gj) in m.g.iter().enumerate() {
                if i != j {
                    cross += gi * gj;
                }
            }
        }
        (1.0 / n1 as f64 + 1.0 / n0 as f64) * (sq / n - cross / (n * (n - 1.0)) + m.sigma2)
    }

    #[test]
    fn crd_risk_examples() {
        assert!((additive_crd_risk(2, 2, &model(vec![1.0; 4], 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((additive_crd_risk(1, 1, &model(vec![1.0, -1.0], 0.0)).unwrap() - 4.0).abs() < 1e-15);
        for n1 in 1..6 {
            assert_eq!(additive_crd_risk(n1, 6 - n1, &model(vec![2.5; 6], 0.0)).unwrap(), 0.0);
        }
        assert!(additive_crd_risk(0, 2, &model(vec![1.0, 1.0], 0.0)).is_err());
    }

    #[test]
    fn crd_risk_matches_enumeration_and_literal_formula() {
        let mut rng = stream(2, 0);
        for n in 2..=8usize {
            for _ in 0..10 {
                let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let m = model(g, rng.random_range(0.0..2.0));
                for n1 in 1..n {
                    let closed = additive_crd_risk(n1, n - n1, &m).unwrap();
                    let d = DesignSpec::crd(n, n1).unwrap();
                    let enumerated = exact_risk(&d, |w| additive_dm_loss(w, &m).unwrap()).unwrap();
                    assert!((closed - enumerated).abs() < 1e-10, "n = {n}, n1 = {n1}");
                    assert!((closed - literal_crd_risk(n1, n - n1, &m)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn balanced_split_minimizes_risk() {
        assert_eq!(optimal_crd_split(6).unwrap(), (3, 3));
        assert_eq!(optimal_crd_split(2).unwrap(), (1, 1));
        assert_eq!(optimal_crd_split(7), Err(DesignError::OddUnitCount { n: 7 }));
        let mut rng = stream(3, 0);
        for _ in 0..20 {
            let m = model((0..8).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0.0..1.0));
            let best = additive_crd_risk(4, 4, &m).unwrap();
            for n1 in 1..8 {
                assert!(best <= additive_crd_risk(n1, 8 - n1, &m).unwrap());
            }
        }
    }

    fn orbit_average(d: &DesignPmf) -> Vec<f64> {
        let n = d.n();
        let mut by_weight = vec![0.0; n + 1];
        for (w, p) in d.support() {
            by_weight[w.n1()] += p;
        }
        (0..1u64 << n)
            .map(|m| {
                let k = m.count_ones() as usize;
                by_weight[k] / binomial(n, k) as f64
            })
            .collect()
    }

    #[test]
    fn symmetrize_examples() {
        let point = DesignPmf::new(3, vec![(Assignment::from_bits(&[1, 0, 0]).unwrap(), 1.0)]).unwrap();
        let s = symmetrize(&point).unwrap();
        let crd = expand_design(&DesignSpec::crd(3, 1).unwrap()).unwrap();
        for m in 0..8u64 {
            let w = Assignment::from_mask(m, 3);
            assert!((s.probability(&w) - crd.probability(&w)).abs() < 1e-15);
        }
        let again = symmetrize(&crd).unwrap();
        assert!((again.total_mass() - 1.0).abs() < 1e-12);
        for (w, p) in crd.support() {
            assert!((again.probability(w) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetrize_matches_weight_class_average() {
        let mut rng = stream(4, 0);
        for n in 1..=6usize {
            let raw: Vec<f64> = (0..1u64 << n).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let d = DesignPmf::new(
                n,
                crate::types::fix_last_mass(
                    raw.iter().enumerate().map(|(m, v)| (Assignment::from_mask(m as u64, n), v / total)).collect(),
                ),
            )
            .unwrap();
            let s = symmetrize(&d).unwrap().to_dense();
            for (a, b) in s.iter().zip(orbit_average(&d)) {
                assert!((a - b).abs() < 1e-14);
            }
            for pi in Permutation::all(n).iter().step_by(7) {
                for m in 0..1u64 << n {
                    assert!((s[m as usize] - s[pi.apply_mask(m) as usize]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn reduced_objective_examples() {
        let b = 1.5;
        let p = [0.2, 0.5, 0.7];
        let t = ScienceTable::new(vec![b; 3], vec![b; 3]).unwrap();
        let expected = b * b / 9.0 * p.iter().map(|q| 1.0 / (q * (1.0 - q))).sum::<f64>();
        assert!((reduced_bernoulli_objective(&p, &t).unwrap() - expected).abs() < 1e-12);

        let t = ScienceTable::new(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        let d = DesignSpec::bernoulli_uniform(2, 0.5).unwrap();
        let tau = t.sample_ate();
        let exact = exact_risk(&d, |w| {
            let y = t.observed(w).unwrap();
            (crate::estimators::ipw_estimate(&y, w, &[0.5, 0.5]).unwrap() - tau).powi(2)
        })
        .unwrap();
        assert!((reduced_bernoulli_objective(&[0.5, 0.5], &t).unwrap() - exact).abs() < 1e-12);

        let p = [0.3, 0.6];
        let y0 = [1.0, -2.0];
        let y1: Vec<f64> = y0.iter().zip(p).map(|(y, q)| -y * q / (1.0 - q)).collect();
        let t = ScienceTable::new(y1, y0.to_vec()).unwrap();
        assert!(reduced_bernoulli_objective(&p, &t).unwrap().abs() < 1e-15);
        assert!(reduced_bernoulli_objective(&[0.0, 0.5], &t).is_err());
    }

    #[test]
    fn worst_case_examples() {
        let one = BoxUncertainty::new(1.0).unwrap();
        assert_eq!(bernoulli_worst_case_risk(&[0.5; 10], one).unwrap(), 0.4);
        assert_eq!(bernoulli_worst_case_risk(&[0.5; 2], BoxUncertainty::new(2.0).unwrap()).unwrap(), 8.0);
        let mut p = vec![0.5; 9];
        p.push(0.25);
        let v = bernoulli_worst_case_risk(&p, one).unwrap();
        assert!((v - (36.0 + 16.0 / 3.0) / 100.0).abs() < 1e-15);
        assert!((v - 0.41333).abs() < 1e-5);
        assert!(BoxUncertainty::new(0.0).is_err());
    }

    #[test]
    fn minimax_examples() {
        let r = minimax_bernoulli(10, BoxUncertainty::new(1.0).unwrap()).unwrap();
        assert_eq!(r.optimal_p, vec![0.5; 10]);
        assert_eq!(r.worst_case_risk, 0.4);
        assert_eq!(minimax_bernoulli(1, BoxUncertainty::new(1.0).unwrap()).unwrap().worst_case_risk, 4.0);
    }

    #[test]
    fn diagonal_scan_is_unimodal_at_half() {
        let bx = BoxUncertainty::new(1.0).unwrap();
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let scan = symmetric_grid_scan(4, bx, &grid).unwrap();
        for pair in scan.windows(2) {
            let ((q0, r0), (q1, r1)) = (pair[0], pair[1]);
            if q1 <= 0.5 + 1e-12 {
                assert!(r1 < r0, "not decreasing at {q0}");
            } else if q0 >= 0.5 - 1e-12 {
                assert!(r1 > r0, "not increasing at {q0}");
            }
        }
    }

    #[test]
    fn symmetrization_does_not_raise_grid_worst_case() {
        let mut rng = stream(5, 0);
        let g0 = [-1.0, 0.0, 2.0];
        for n in 2..=5usize {
            for _ in 0..3 {
                let support: Vec<(Assignment, f64)> =
                    (1..(1u64 << n) - 1).map(|m| (Assignment::from_mask(m, n), rng.random::<f64>().powi(3))).collect();
                let total: f64 = support.iter().map(|(_, p)| p).sum();
                let d = DesignPmf::new(
                    n,
                    crate::types::fix_last_mass(support.into_iter().map(|(w, p)| (w, p / total)).collect()),
                )
                .unwrap();
                let before = worst_case_additive_risk(&d, &g0, 0.5).unwrap();
                let after = worst_case_additive_risk(&symmetrize(&d).unwrap(), &g0, 0.5).unwrap();
                assert!(after <= before + 1e-10, "{after} > {before}");
            }
        }
    }

    proptest! {
        #[test]
        fn worst_case_dominates_tables_in_box(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = stream(seed, 0);
            let b = rng.random_range(0.1..5.0);
            let bx = BoxUncertainty::new(b).unwrap();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let y1: Vec<f64> = (0..n).map(|_| rng.random_range(-b..=b)).collect();
            let y0: Vec<f64> = (0..n).map(|_| rng.random_range(-b..=b)).collect();
            let t = ScienceTable::new(y1, y0).unwrap();
            let wc = bernoulli_worst_case_risk(&p, bx).unwrap();
            prop_assert!(wc >= reduced_bernoulli_objective(&p, &t).unwrap() - 1e-12);
            let mut rev = p.clone();
            rev.reverse();
            prop_assert!((bernoulli_worst_case_risk(&rev, bx).unwrap() - wc).abs() <= 1e-12 * wc);
        }
    }
}
