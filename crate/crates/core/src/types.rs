//! Domain types shared by every module: science tables, assignments,
//! designs, permutations, strata, covariates and panels.
//!
//! Units are indexed `0..n` internally. Constructors named `from_one_based`
//! accept the `1..=n` indexing used by file formats and reports.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, DesignError, Result};
use crate::linalg::neumaier_sum;

/// Tolerance on the total mass of an explicit design.
pub const PMF_TOL: f64 = 1e-12;

/// Largest unit count for which an explicit probability mass function may
/// be materialized (2^20 assignment vectors).
pub const MAX_EXPLICIT_UNITS: usize = 20;

/// The 2n potential outcomes of a finite sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScienceTable {
    y1: Vec<f64>,
    y0: Vec<f64>,
}

impl ScienceTable {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>) -> Result<Self> {
        if y1.is_empty() {
            return Err(DesignError::InvalidParameter("science table needs at least one unit".into()));
        }
        ensure_len(y1.len(), y0.len())?;
        ensure_finite(&y1, "y1")?;
        ensure_finite(&y0, "y0")?;
        Ok(Self { y1, y0 })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    /// Finite-sample average treatment effect `(1/n) Σ (y1_j - y0_j)`.
    pub fn sample_ate(&self) -> f64 {
        let n = self.n() as f64;
        neumaier_sum(self.y1.iter().zip(&self.y0).map(|(a, b)| a - b)) / n
    }

    /// Observed outcomes `Y_j = Y_j(w_j)` under assignment `w`.
    pub fn observed(&self, w: &Assignment) -> Result<Vec<f64>> {
        ensure_len(self.n(), w.len())?;
        Ok(w.iter().enumerate().map(|(j, t)| if t { self.y1[j] } else { self.y0[j] }).collect())
    }
}

/// Free-function form of [`ScienceTable::sample_ate`].
pub fn sample_ate(t: &ScienceTable) -> f64 {
    t.sample_ate()
}

/// A treatment assignment vector `w ∈ {0,1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn new(w: Vec<bool>) -> Self {
        Self(w)
    }

    /// From 0/1 entries; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .enumerate()
            .map(|(j, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(DesignError::InvalidParameter(format!(
                    "assignment entry {} at unit {} is not 0 or 1",
                    b,
                    j + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// Bit `j` of `mask` is the assignment of unit `j`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self((0..n).map(|j| mask >> j & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        debug_assert!(self.0.len() <= 64);
        self.0.iter().enumerate().fold(0u64, |m, (j, &t)| if t { m | 1 << j } else { m })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// Number of treated units, N(1).
    pub fn n1(&self) -> usize {
        self.0.iter().filter(|&&t| t).count()
    }

    /// Number of control units, N(0).
    pub fn n0(&self) -> usize {
        self.len() - self.n1()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&t| t as u8).collect()
    }

    /// Restriction to the listed units, in the listed order.
    pub fn restrict(&self, units: &[usize]) -> Assignment {
        Assignment(units.iter().map(|&j| self.0[j]).collect())
    }
}

/// A randomized design η.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    /// Independent coin flips with per-unit probabilities.
    Bernoulli {
        p: Vec<f64>,
    },
    /// Uniform over assignments with exactly `n1` treated units.
    CompletelyRandomized {
        n: usize,
        n1: usize,
    },
    /// Independent inner designs per stratum; `inner[l]` acts on
    /// `partition.strata()[l]` in the listed unit order.
    Stratified {
        partition: StrataPartition,
        inner: Vec<DesignSpec>,
    },
    Explicit(DesignPmf),
}

impl DesignSpec {
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        let d = DesignSpec::Bernoulli { p };
        d.validate()?;
        Ok(d)
    }

    pub fn bernoulli_uniform(n: usize, p: f64) -> Result<Self> {
        Self::bernoulli(vec![p; n])
    }

    pub fn crd(n: usize, n1: usize) -> Result<Self> {
        let d = DesignSpec::CompletelyRandomized { n, n1 };
        d.validate()?;
        Ok(d)
    }

    pub fn stratified(partition: StrataPartition, inner: Vec<DesignSpec>) -> Result<Self> {
        let d = DesignSpec::Stratified { partition, inner };
        d.validate()?;
        Ok(d)
    }

    /// Matched pairs (or any even strata) with half of each stratum treated.
    pub fn half_treated_strata(partition: StrataPartition) -> Result<Self> {
        let inner = partition
            .strata()
            .iter()
            .enumerate()
            .map(|(l, s)| {
                if s.len() % 2 != 0 {
                    Err(DesignError::OddStratum { stratum: l + 1, size: s.len() })
                } else {
                    DesignSpec::crd(s.len(), s.len() / 2)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::stratified(partition, inner)
    }

    pub fn explicit(pmf: DesignPmf) -> Self {
        DesignSpec::Explicit(pmf)
    }

    pub fn n(&self) -> usize {
        match self {
            DesignSpec::Bernoulli { p } => p.len(),
            DesignSpec::CompletelyRandomized { n, .. } => *n,
            DesignSpec::Stratified { partition, .. } => partition.n(),
            DesignSpec::Explicit(pmf) => pmf.n(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DesignSpec::Bernoulli { p } => {
                if p.is_empty() {
                    return Err(DesignError::InvalidDesign("Bernoulli design with no units".into()));
                }
                for (j, &pj) in p.iter().enumerate() {
                    if !(pj > 0.0 && pj < 1.0) {
                        return Err(DesignError::InvalidProbability { unit: j + 1, value: pj });
                    }
                }
                Ok(())
            }
            DesignSpec::CompletelyRandomized { n, n1 } => {
                if *n < 2 || *n1 < 1 || *n1 > n - 1 {
                    return Err(DesignError::InvalidTreatedCount { n: *n, n1: *n1 });
                }
                Ok(())
            }
            DesignSpec::Stratified { partition, inner } => {
                ensure_len(partition.len(), inner.len())?;
                for (l, (s, d)) in partition.strata().iter().zip(inner).enumerate() {
                    if d.n() != s.len() {
                        return Err(DesignError::InvalidDesign(format!(
                            "inner design {} covers {} units but stratum has {}",
                            l + 1,
                            d.n(),
                            s.len()
                        )));
                    }
                    d.validate()?;
                }
                Ok(())
            }
            DesignSpec::Explicit(_) => Ok(()),
        }
    }

    /// Per-unit marginal treatment probabilities `Pr(W_j = 1)`.
    pub fn marginal_propensities(&self) -> Vec<f64> {
        match self {
            DesignSpec::Bernoulli { p } => p.clone(),
            DesignSpec::CompletelyRandomized { n, n1 } => vec![*n1 as f64 / *n as f64; *n],
            DesignSpec::Stratified { partition, inner } => {
                let mut out = vec![0.0; partition.n()];
                for (s, d) in partition.strata().iter().zip(inner) {
                    for (&unit, e) in s.iter().zip(d.marginal_propensities()) {
                        out[unit] = e;
                    }
                }
                out
            }
            DesignSpec::Explicit(pmf) => pmf.marginals(),
        }
    }
}

/// Free-function form of [`DesignSpec::marginal_propensities`].
pub fn marginal_propensities(d: &DesignSpec) -> Vec<f64> {
    d.marginal_propensities()
}

/// An explicit probability mass function over assignment vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPmf {
    n: usize,
    support: Vec<(Assignment, f64)>,
}

impl DesignPmf {
    pub fn new(n: usize, support: Vec<(Assignment, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(DesignError::InvalidPmf("no units".into()));
        }
        if n > MAX_EXPLICIT_UNITS {
            return Err(DesignError::SizeCapExceeded { what: "explicit design", size: n, cap: MAX_EXPLICIT_UNITS });
        }
        if support.is_empty() {
            return Err(DesignError::InvalidPmf("empty support".into()));
        }
        let mut seen = HashSet::with_capacity(support.len());
        for (w, p) in &support {
            ensure_len(n, w.len())?;
            if !p.is_finite() || *p < 0.0 {
                return Err(DesignError::InvalidPmf(format!("probability {p} is not a finite nonnegative number")));
            }
            if !seen.insert(w.mask()) {
                return Err(DesignError::InvalidPmf(format!("duplicate support vector {:?}", w.to_bits())));
            }
        }
        let sum = neumaier_sum(support.iter().map(|(_, p)| *p));
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(DesignError::NotNormalized { sum });
        }
        Ok(Self { n, support })
    }

    /// Uniform distribution over the given distinct vectors.
    pub fn uniform(n: usize, vectors: Vec<Assignment>) -> Result<Self> {
        let p = 1.0 / vectors.len().max(1) as f64;
        let support: Vec<_> = vectors.into_iter().map(|w| (w, p)).collect();
        // 1/m summed m times can miss 1 by a few ulps; renormalize the last entry.
        Self::new(n, fix_last_mass(support))
    }

    /// Dense form indexed by [`Assignment::mask`]; entries must sum to one.
    pub fn from_dense(n: usize, mass: &[f64]) -> Result<Self> {
        ensure_len(1usize << n, mass.len())?;
        let support = mass
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(m, &p)| (Assignment::from_mask(m as u64, n), p))
            .collect();
        Self::new(n, support)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[(Assignment, f64)] {
        &self.support
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.support.iter().map(|(_, p)| *p))
    }

    /// `η(w)`; zero off the support.
    pub fn probability(&self, w: &Assignment) -> f64 {
        self.support.iter().find(|(v, _)| v == w).map_or(0.0, |(_, p)| *p)
    }

    /// Dense mass vector indexed by mask.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1usize << self.n];
        for (w, p) in &self.support {
            out[w.mask() as usize] += p;
        }
        out
    }

    pub fn marginals(&self) -> Vec<f64> {
        (0..self.n).map(|j| neumaier_sum(self.support.iter().filter(|(w, _)| w.get(j)).map(|(_, p)| *p))).collect()
    }
}

pub(crate) fn fix_last_mass(mut support: Vec<(Assignment, f64)>) -> Vec<(Assignment, f64)> {
    if let Some(last) = support.len().checked_sub(1) {
        let head = neumaier_sum(support[..last].iter().map(|(_, p)| *p));
        support[last].1 = (1.0 - head).max(0.0);
    }
    support
}

/// A bijection on units; `map[j]` is the image `π(j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut hit = vec![false; n];
        for &t in &map {
            if t >= n {
                return Err(DesignError::InvalidPermutation(format!("target {} out of range for n = {}", t + 1, n)));
            }
            if hit[t] {
                return Err(DesignError::InvalidPermutation(format!("target {} appears twice", t + 1)));
            }
            hit[t] = true;
        }
        Ok(Self { map })
    }

    /// From images written as `1..=n`.
    pub fn from_one_based(map: &[usize]) -> Result<Self> {
        let zero = map
            .iter()
            .map(|&t| {
                t.checked_sub(1).ok_or_else(|| DesignError::InvalidPermutation("targets are numbered from 1".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero)
    }

    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect() }
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn image(&self, j: usize) -> usize {
        self.map[j]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.n()];
        for (j, &t) in self.map.iter().enumerate() {
            inv[t] = j;
        }
        Self { map: inv }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        ensure_len(self.n(), other.n())?;
        Ok(Self { map: other.map.iter().map(|&j| self.map[j]).collect() })
    }

    /// Output index `i` holds `v[π⁻¹(i)]`, i.e. entry `j` moves to `π(j)`.
    pub fn apply<T: Clone>(&self, v: &[T]) -> Result<Vec<T>> {
        ensure_len(self.n(), v.len())?;
        let mut out: Vec<Option<T>> = vec![None; v.len()];
        for (j, x) in v.iter().enumerate() {
            out[self.map[j]] = Some(x.clone());
        }
        Ok(out.into_iter().map(|x| x.expect("bijection")).collect())
    }

    pub fn apply_assignment(&self, w: &Assignment) -> Result<Assignment> {
        self.apply(w.as_slice()).map(Assignment)
    }

    /// Image of a mask under the permutation (bit `j` moves to bit `π(j)`).
    pub(crate) fn apply_mask(&self, mask: u64) -> u64 {
        self.map.iter().enumerate().fold(0u64, |m, (j, &t)| if mask >> j & 1 == 1 { m | 1 << t } else { m })
    }

    /// All n! permutations (Heap's algorithm).
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut a: Vec<usize> = (0..n).collect();
        let mut out = vec![Permutation { map: a.clone() }];
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    a.swap(0, i);
                } else {
                    a.swap(c[i], i);
                }
                out.push(Permutation { map: a.clone() });
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        out
    }
}

/// Free-function form of [`Permutation::apply`].
pub fn apply_permutation<T: Clone>(pi: &Permutation, v: &[T]) -> Result<Vec<T>> {
    pi.apply(v)
}

/// A disjoint cover of the units by nonempty strata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataPartition {
    n: usize,
    strata: Vec<Vec<usize>>,
}

impl StrataPartition {
    pub fn new(n: usize, strata: Vec<Vec<usize>>) -> Result<Self> {
        let mut owner = vec![usize::MAX; n];
        for (l, s) in strata.iter().enumerate() {
            if s.is_empty() {
                return Err(DesignError::InvalidPartition(format!("stratum {} is empty", l + 1)));
            }
            for &j in s {
                if j >= n {
                    return Err(DesignError::InvalidPartition(format!("unit {} out of range for n = {}", j + 1, n)));
                }
                if owner[j] != usize::MAX {
                    return Err(DesignError::InvalidPartition(format!(
                        "unit {} appears in strata {} and {}",
                        j + 1,
                        owner[j] + 1,
                        l + 1
                    )));
                }
                owner[j] = l;
            }
        }
        if let Some(j) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(DesignError::InvalidPartition(format!("unit {} is not covered", j + 1)));
        }
        Ok(Self { n, strata })
    }

    pub fn from_one_based(n: usize, strata: &[Vec<usize>]) -> Result<Self> {
        let zero = strata
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&j| {
                        j.checked_sub(1)
                            .ok_or_else(|| DesignError::InvalidPartition("units are numbered from 1".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, zero)
    }

    /// A single stratum holding every unit.
    pub fn trivial(n: usize) -> Result<Self> {
        Self::new(n, vec![(0..n).collect()])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of strata, k.
    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn strata(&self) -> &[Vec<usize>] {
        &self.strata
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.strata.iter().map(Vec::len).collect()
    }

    pub fn is_matching(&self) -> bool {
        self.strata.iter().all(|s| s.len() == 2)
    }

    /// Same partition with sorted strata, ordered by smallest member.
    pub fn canonical(&self) -> Self {
        let mut strata: Vec<Vec<usize>> = self
            .strata
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s
            })
            .collect();
        strata.sort();
        Self { n: self.n, strata }
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.strata.iter().map(|s| s.iter().map(|j| j + 1).collect()).collect()
    }
}

/// Observed covariates, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    data: DMatrix<f64>,
    labels: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(data: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(DesignError::InvalidParameter("covariate matrix needs at least one row and column".into()));
        }
        ensure_len(data.ncols(), labels.len())?;
        ensure_finite(data.as_slice(), "covariates")?;
        Ok(Self { data, labels })
    }

    /// Rows of equal length, labelled `x1..xd`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        for r in rows {
            ensure_len(d, r.len())?;
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = DMatrix::from_row_slice(rows.len(), d, &flat);
        Self::new(data, (1..=d).map(|i| format!("x{i}")).collect())
    }

    /// A single all-ones column.
    pub fn intercept_only(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, 1, 1.0), vec!["intercept".into()])
    }

    /// Prepends an all-ones column.
    pub fn with_intercept(&self) -> Self {
        let n = self.n();
        let mut data = DMatrix::from_element(n, self.d() + 1, 1.0);
        data.view_mut((0, 1), (n, self.d())).copy_from(&self.data);
        let mut labels = vec!["intercept".to_string()];
        labels.extend(self.labels.iter().cloned());
        Self { data, labels }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, j: usize) -> DVector<f64> {
        self.data.row(j).transpose()
    }
}

/// Panel of outcomes, n units × T periods, with the first `t0` periods
/// observed before the experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    outcomes: DMatrix<f64>,
    t0: usize,
}

impl PanelData {
    pub fn new(outcomes: DMatrix<f64>, t0: usize) -> Result<Self> {
        let t = outcomes.ncols();
        if outcomes.nrows() == 0 {
            return Err(DesignError::InvalidParameter("panel has no units".into()));
        }
        if t0 < 1 || t0 >= t {
            return Err(DesignError::InvalidParameter(format!("T0 must be < T and >= 1 (T0 = {t0}, T = {t})")));
        }
        ensure_finite(outcomes.as_slice(), "panel outcomes")?;
        Ok(Self { outcomes, t0 })
    }

    pub fn n(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn periods(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.outcomes
    }

    /// Pre-experimental outcomes of unit `j`, length T0.
    pub fn pre_period(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(self.t0, self.outcomes.row(j).iter().take(self.t0).copied())
    }

    /// Outcomes of all units in period `t` (0-based).
    pub fn period(&self, t: usize) -> Vec<f64> {
        self.outcomes.column(t).iter().copied().collect()
    }
}
