//! Covariate-driven designs under the linear model: the treated/control
//! split minimizing the variance of the OLS treatment coefficient, and
//! D-optimal subset selection.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DesignError, Result};
use crate::linalg::projection_complement;
use crate::oracle::enumerate_k_subsets;
use crate::rng::stream;
use crate::types::{Assignment, CovariateMatrix};

/// Largest n scanned exhaustively by [`da_exhaustive`].
pub const MAX_DA_EXHAUSTIVE_UNITS: usize = 22;

/// Objectives at or below this (relative to `max(1, N(1))`) leave the
/// treatment coefficient unidentified and are excluded.
const DEGENERATE_TOL: f64 = 1e-12;
/// Relative tolerance under which two objectives count as tied.
const TIE_TOL: f64 = 1e-9;
/// Gray-code scans recompute `Mw` from scratch this often.
const RESYNC_EVERY: u64 = 4096;

/// The `D_A` problem `max_w wᵀ M w` with `M = I - x(xᵀx)⁻¹xᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaProblem {
    x: CovariateMatrix,
    m: DMatrix<f64>,
}

impl DaProblem {
    pub fn new(x: CovariateMatrix) -> Result<Self> {
        let m = projection_complement(x.matrix())?;
        Ok(Self { x, m })
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.x
    }

    pub fn projection_complement(&self) -> &DMatrix<f64> {
        &self.m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaSolution {
    pub assignment: Assignment,
    pub objective: f64,
}

/// `wᵀ M w`; equals `σ² / Var(τ̂)` whenever the OLS variance is finite.
pub fn da_objective(w: &Assignment, prob: &DaProblem) -> Result<f64> {
    ensure_len(prob.n(), w.len())?;
    let wv = DVector::from_vec(w.to_f64());
    Ok(wv.dot(&(&prob.m * &wv)))
}

fn identified(obj: f64, n1: u32) -> bool {
    obj > DEGENERATE_TOL * (n1.max(1) as f64)
}

fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Lexicographic rank of a mask: unit 0 is the most significant position.
fn lex_key(mask: u64, n: usize) -> u64 {
    mask.reverse_bits() >> (64 - n)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    obj: f64,
    key: u64,
    mask: u64,
}

/// Keeps the larger objective; on ties the lexicographically smaller vector.
fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if is_tie(a.obj, b.obj) {
                Some(if b.key < a.key { b } else { a })
            } else if b.obj > a.obj {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

fn gray(k: u64) -> u64 {
    k ^ (k >> 1)
}

fn scan_range(m: &DMatrix<f64>, n: usize, start: u64, end: u64) -> Option<Candidate> {
    let resync = |mask: u64| {
        let mut mw = vec![0.0; n];
        for j in (0..n).filter(|j| mask >> j & 1 == 1) {
            for (i, v) in mw.iter_mut().enumerate() {
                *v += m[(i, j)];
            }
        }
        let obj: f64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| mw[j]).sum();
        (mw, obj)
    };
    let mut mask = gray(start);
    let (mut mw, mut obj) = resync(mask);
    let mut best = None;
    let mut k = start;
    loop {
        let n1 = mask.count_ones();
        if identified(obj, n1) {
            best = better(best, Some(Candidate { obj, key: lex_key(mask, n), mask }));
        }
        k += 1;
        if k >= end {
            break;
        }
        if (k - start).is_multiple_of(RESYNC_EVERY) {
            mask = gray(k);
            (mw, obj) = resync(mask);
            continue;
        }
        let j = k.trailing_zeros() as usize;
        let col = m.column(j);
        if mask >> j & 1 == 0 {
            obj += 2.0 * mw[j] + m[(j, j)];
            for (v, c) in mw.iter_mut().zip(col.iter()) {
                *v += c;
            }
        } else {
            obj += -2.0 * mw[j] + m[(j, j)];
            for (v, c) in mw.iter_mut().zip(col.iter()) {
                *v -= c;
            }
        }
        mask ^= 1 << j;
    }
    best
}

/// Global maximizer of `wᵀMw` over `{0,1}ⁿ` by Gray-code enumeration,
/// skipping vectors for which the treatment effect is not identified.
pub fn da_exhaustive(prob: &DaProblem) -> Result<DaSolution> {
    let n = prob.n();
    if n > MAX_DA_EXHAUSTIVE_UNITS {
        return Err(DesignError::SizeCapExceeded {
            what: "exhaustive D_A search",
            size: n,
            cap: MAX_DA_EXHAUSTIVE_UNITS,
        });
    }
    let total = 1u64 << n;
    let chunks = total.min(256);
    let per = total / chunks;
    let bests: Vec<Option<Candidate>> =
        (0..chunks).into_par_iter().map(|c| scan_range(&prob.m, n, c * per, (c + 1) * per)).collect();
    let best = bests.into_iter().fold(None, better).ok_or(DesignError::CollinearTreatment)?;
    let assignment = Assignment::from_mask(best.mask, n);
    // report the objective recomputed directly, free of scan drift
    let objective = da_objective(&assignment, prob)?;
    Ok(DaSolution { assignment, objective })
}

fn local_search_from(m: &DMatrix<f64>, mut w: Vec<bool>) -> (Vec<bool>, f64) {
    let n = w.len();
    let mut mw = vec![0.0; n];
    for j in (0..n).filter(|&j| w[j]) {
        for (i, v) in mw.iter_mut().enumerate() {
            *v += m[(i, j)];
        }
    }
    let mut obj: f64 = (0..n).filter(|&j| w[j]).map(|j| mw[j]).sum();
    loop {
        let sign = |j: usize| if w[j] { -1.0 } else { 1.0 };
        let flip: Vec<f64> = (0..n).map(|j| sign(j) * 2.0 * mw[j] + m[(j, j)]).collect();
        let mut best = (0.0, None::<(usize, Option<usize>)>);
        for (j, &gain) in flip.iter().enumerate() {
            if gain > best.0 {
                best = (gain, Some((j, None)));
            }
        }
        for i in (0..n).filter(|&i| w[i]) {
            for j in (0..n).filter(|&j| !w[j]) {
                let delta = flip[i] + flip[j] + 2.0 * sign(i) * sign(j) * m[(i, j)];
                if delta > best.0 {
                    best = (delta, Some((i, Some(j))));
                }
            }
        }
        let (delta, Some((i, j))) = best else { break };
        if delta <= TIE_TOL * obj.abs().max(1.0) {
            break;
        }
        for u in std::iter::once(i).chain(j) {
            let s = if w[u] { -1.0 } else { 1.0 };
            for (v, c) in mw.iter_mut().zip(m.column(u).iter()) {
                *v += s * c;
            }
            w[u] = !w[u];
        }
        obj += delta;
    }
    (w, obj)
}

/// Best of `restarts` local searches over 1-flips and treated/control swaps,
/// each from a Bernoulli(½) start drawn from stream `(seed, r)`.
pub fn da_local_search(prob: &DaProblem, restarts: usize, seed: u64) -> Result<DaSolution> {
    if restarts == 0 {
        return Err(DesignError::InvalidParameter("restarts must be >= 1".into()));
    }
    let n = prob.n();
    let results: Vec<(Vec<bool>, f64)> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let start: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            local_search_from(&prob.m, start)
        })
        .collect();
    let mut best: Option<(Assignment, f64)> = None;
    for (w, _) in results {
        let a = Assignment::new(w);
        let obj = da_objective(&a, prob)?;
        best = match best {
            None => Some((a, obj)),
            Some((b, bo)) => {
                if (is_tie(obj, bo) && a < b) || (!is_tie(obj, bo) && obj > bo) {
                    Some((a, obj))
                } else {
                    Some((b, bo))
                }
            }
        };
    }
    let (assignment, objective) = best.expect("at least one restart");
    Ok(DaSolution { assignment, objective })
}

/// A chosen subset with its information matrix `Σ_{j∈S} x_j x_jᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetDesign {
    pub subset: Vec<usize>,
    /// Log-determinant of the information matrix; `-∞` when singular.
    pub objective: f64,
    pub information_matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoptMode {
    Exhaustive,
    /// Greedy fill then 1-exchange, plus `random_starts` extra exchange runs
    /// from random subsets.
    GreedyExchange {
        random_starts: usize,
    },
}

/// Pivots of the Cholesky factor below this fraction of the largest
/// diagonal entry mark the information matrix singular.
const SINGULAR_TOL: f64 = 1e-12;

pub fn information_matrix(s: &[usize], x: &CovariateMatrix) -> DMatrix<f64> {
    let d = x.d();
    let mut info = DMatrix::zeros(d, d);
    for &j in s {
        let r = x.row(j);
        info += &r * r.transpose();
    }
    info
}

fn log_det(info: &DMatrix<f64>) -> f64 {
    let scale = info.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b));
    if scale <= 0.0 {
        return f64::NEG_INFINITY;
    }
    match info.clone().cholesky() {
        None => f64::NEG_INFINITY,
        Some(c) => {
            let l = c.l();
            let mut acc = 0.0;
            for i in 0..info.nrows() {
                let piv = l[(i, i)] * l[(i, i)];
                if piv <= SINGULAR_TOL * scale {
                    return f64::NEG_INFINITY;
                }
                acc += piv.ln();
            }
            acc
        }
    }
}

/// `log det(Σ_{j∈S} x_j x_jᵀ)`, or `-∞` for a singular information matrix.
pub fn dopt_objective(s: &[usize], x: &CovariateMatrix) -> Result<f64> {
    if s.len() < x.d() {
        return Err(DesignError::SubsetTooSmall { size: s.len(), dim: x.d() });
    }
    if let Some(&j) = s.iter().find(|&&j| j >= x.n()) {
        return Err(DesignError::InvalidParameter(format!("unit {} out of range", j + 1)));
    }
    Ok(log_det(&information_matrix(s, x)))
}

fn finish(mut s: Vec<usize>, x: &CovariateMatrix) -> SubsetDesign {
    s.sort_unstable();
    let info = information_matrix(&s, x);
    SubsetDesign { objective: log_det(&info), subset: s, information_matrix: info }
}

fn improves(new: f64, old: f64) -> bool {
    if old == f64::NEG_INFINITY {
        return new > old;
    }
    new > old + 1e-12 * old.abs().max(1.0)
}

fn exchange(mut s: Vec<usize>, x: &CovariateMatrix) -> Vec<usize> {
    let n = x.n();
    let mut cur = log_det(&information_matrix(&s, x));
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for pos in 0..s.len() {
            for j in (0..n).filter(|j| !s.contains(j)) {
                let mut t = s.clone();
                t[pos] = j;
                let v = log_det(&information_matrix(&t, x));
                if improves(v, best.map_or(cur, |b| b.0)) {
                    best = Some((v, pos, j));
                }
            }
        }
        match best {
            Some((v, pos, j)) => {
                s[pos] = j;
                cur = v;
            }
            None => return s,
        }
    }
}

fn greedy_fill(x: &CovariateMatrix, k: usize) -> Vec<usize> {
    let d = x.d();
    let full = information_matrix(&(0..x.n()).collect::<Vec<_>>(), x);
    let ridge = 1e-6 * full.trace().max(1e-300) / d as f64;
    let mut a = DMatrix::identity(d, d) * ridge;
    let mut s = Vec::with_capacity(k);
    while s.len() < k {
        let a_inv = a.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(d, d));
        let mut best: Option<(f64, usize)> = None;
        for j in (0..x.n()).filter(|j| !s.contains(j)) {
            let r = x.row(j);
            let gain = r.dot(&(&a_inv * &r));
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, j));
            }
        }
        let (_, j) = best.expect("k <= n leaves a candidate");
        let r = x.row(j);
        a += &r * r.transpose();
        s.push(j);
    }
    s
}

/// D-optimal subset of size `k`.
pub fn dopt_search(x: &CovariateMatrix, k: usize, mode: DoptMode, seed: u64) -> Result<SubsetDesign> {
    let (n, d) = (x.n(), x.d());
    if k < d || k > n {
        return Err(DesignError::InvalidParameter(format!("subset size k = {k} must satisfy d = {d} <= k <= n = {n}")));
    }
    match mode {
        DoptMode::Exhaustive => {
            let mut best: Option<(f64, Vec<usize>)> = None;
            for s in enumerate_k_subsets(n, k)? {
                let v = log_det(&information_matrix(&s, x));
                if best.as_ref().is_none_or(|(bv, _)| improves(v, *bv)) {
                    best = Some((v, s));
                }
            }
            Ok(finish(best.expect("at least one subset").1, x))
        }
        DoptMode::GreedyExchange { random_starts } => {
            let mut starts = vec![greedy_fill(x, k)];
            for r in 0..random_starts as u64 {
                let mut rng = stream(seed, r);
                starts.push(index::sample(&mut rng, n, k).into_vec());
            }
            let results: Vec<SubsetDesign> = starts.into_par_iter().map(|s| finish(exchange(s, x), x)).collect();
            let mut best = results[0].clone();
            for r in results.into_iter().skip(1) {
                if improves(r.objective, best.objective) {
                    best = r;
                }
            }
            Ok(best)
        }
    }
}
