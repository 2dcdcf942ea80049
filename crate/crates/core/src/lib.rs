//! Experimental design as optimization: randomized designs, causal
//! estimators, minimax and stochastic design rules, covariate-driven
//! deterministic designs, synthetic-control designs, exact enumeration
//! oracles and a seeded Monte Carlo harness.

pub mod designs;
pub mod deterministic;
pub mod error;
pub mod estimators;
mod linalg;
pub mod oracle;
pub mod rng;
pub mod robust;
pub mod simplex;
pub mod simulation;
pub mod stochastic;
pub mod synth;
pub mod types;

pub use error::{DesignError, Result};
pub use linalg::neumaier_sum;
pub use nalgebra;
pub use types::{
    apply_permutation, marginal_propensities, sample_ate, Assignment, CovariateMatrix, DesignPmf, DesignSpec,
    PanelData, Permutation, ScienceTable, StrataPartition,
};
