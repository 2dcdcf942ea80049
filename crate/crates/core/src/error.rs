use thiserror::Error;

/// Errors raised by the design, estimation and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("probability at unit {unit} must lie strictly inside (0, 1), got {value}")]
    InvalidProbability { unit: usize, value: f64 },

    #[error("invalid treated count n1 = {n1} for n = {n} (need 1 <= n1 <= n - 1)")]
    InvalidTreatedCount { n: usize, n1: usize },

    #[error("probability mass sums to {sum}, not 1")]
    NotNormalized { sum: f64 },

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid strata partition: {0}")]
    InvalidPartition(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("degenerate assignment: difference in means needs at least one treated and one control unit")]
    DegenerateAssignment,

    #[error("positivity violated at unit {unit}: propensity {value}")]
    PositivityViolated { unit: usize, value: f64 },

    #[error("degenerate stratum {stratum}: needs at least one treated and one control unit")]
    DegenerateStratum { stratum: usize },

    #[error("singular design matrix")]
    SingularDesignMatrix,

    #[error("treatment collinear with covariates")]
    CollinearTreatment,

    #[error("simplex violation in {what}: {detail}")]
    SimplexViolation { what: &'static str, detail: String },

    #[error("weights overlap at unit {unit}")]
    OverlappingSupport { unit: usize },

    #[error("{what}: size {size} exceeds the cap of {cap}")]
    SizeCapExceeded { what: &'static str, size: usize, cap: usize },

    #[error("combinatorial overflow: {count} candidates exceed the cap of {cap}")]
    CombinatorialOverflow { count: u128, cap: u128 },

    #[error("an even number of units is required, got n = {n}")]
    OddUnitCount { n: usize },

    #[error("stratum {stratum} has odd size {size}; half-treated strata need even sizes")]
    OddStratum { stratum: usize, size: usize },

    #[error("conditioning event has zero probability under the design")]
    ZeroMassConditioning,

    #[error("subset smaller than dimension: |S| = {size} < d = {dim}")]
    SubsetTooSmall { size: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DesignError>;

pub(crate) fn ensure_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(DesignError::LengthMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DesignError::NonFinite { what })
    }
}
