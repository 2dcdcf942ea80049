use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "expdesign",
    version,
    about = "Optimal experimental design solvers, exact oracles and Monte Carlo studies"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of standard output
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags given on the command line take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core); results do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Minimax Bernoulli design over a box of potential outcomes
    MinimaxBernoulli(MinimaxArgs),
    /// Risk of completely randomized designs under the additive model
    CrdRisk(CrdRiskArgs),
    /// Optimal matched pairs for a baseline vector
    MatchedPairs(MatchedPairsArgs),
    /// Assignment minimizing the OLS treatment-effect variance
    DaOpt(DaOptArgs),
    /// D-optimal subset of k units
    DOpt(DOptArgs),
    /// Synthetic control experiment design on a panel
    SynthDesign(SynthArgs),
    /// Bias bound for the synthetic control estimator under a factor model
    #[command(alias = "theorem4-bound")]
    BiasBound(BiasBoundArgs),
    /// Treatment effect estimate from observed data
    Estimate(EstimateArgs),
    /// Exact enumeration checks
    Oracle(OracleArgs),
    /// Seeded Monte Carlo studies
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MinimaxBernoulli(_) => "minimax-bernoulli",
            Command::CrdRisk(_) => "crd-risk",
            Command::MatchedPairs(_) => "matched-pairs",
            Command::DaOpt(_) => "da-opt",
            Command::DOpt(_) => "d-opt",
            Command::SynthDesign(_) => "synth-design",
            Command::BiasBound(_) => "bias-bound",
            Command::Estimate(_) => "estimate",
            Command::Oracle(_) => "oracle",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MinimaxArgs {
    /// Number of units
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Outcome bound: potential outcomes lie in [-b, b]
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Also report worst-case risk of symmetric designs p = 0.1, ..., 0.9
    #[arg(long, default_value_t = false)]
    pub scan: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BaselineInput {
    /// Baseline effects, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub g: Option<Vec<f64>>,
    /// CSV with header `unit,g`
    #[arg(long)]
    pub baselines: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CrdRiskArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: BaselineInput,
    /// Noise variance
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    /// Treated count; omitted means every split 1..n-1
    #[arg(long)]
    pub n1: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MatchedPairsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: BaselineInput,
    /// Check against brute force over all pairings (n <= 12)
    #[arg(long, default_value_t = false)]
    pub verify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaMode {
    Exhaustive,
    Local,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DaOptArgs {
    /// CSV with header `unit,x1,...,xd`
    #[arg(long)]
    pub covariates: PathBuf,
    /// Prepend an intercept column
    #[arg(long, default_value_t = false)]
    pub intercept: bool,
    #[arg(long, value_enum, default_value_t = DaMode::Local)]
    pub mode: DaMode,
    /// Local search restarts
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DOptArgs {
    /// CSV with header `unit,x1,...,xd`
    #[arg(long)]
    pub covariates: PathBuf,
    /// Subset size
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Greedy)]
    pub mode: SearchMode,
    /// Extra exchange runs from random subsets (greedy mode)
    #[arg(long, default_value_t = 0)]
    pub random_starts: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// CSV with header `unit,period,outcome`
    #[arg(long)]
    pub panel: PathBuf,
    /// Number of pre-experiment periods
    #[arg(long)]
    pub t0: usize,
    /// CSV with header `unit,x1,...,xd`
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Largest treated set
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Exhaustive)]
    pub mode: SearchMode,
    /// Target weights f, comma separated, in unit order; uniform if omitted
    #[arg(long, value_delimiter = ',')]
    pub target: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BiasBoundArgs {
    #[arg(long, default_value_t = 1.0)]
    pub beta_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_bar: f64,
    /// Number of latent factors
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Covariate dimension
    #[arg(long, default_value_t = 0)]
    pub d: usize,
    /// Lower bound on the smallest eigenvalue of the scaled pre-period loading Gram matrix
    #[arg(long, default_value_t = 1.0)]
    pub zeta_lower: f64,
    /// Fit constant
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Noise scale
    #[arg(long, default_value_t = 1.0)]
    pub sigma_bar: f64,
    #[arg(long)]
    pub t0: usize,
    /// Number of units
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dm,
    Ipw,
    Aggregate,
    Ols,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// CSV with header `unit,w,y` and optional `stratum`, `propensity`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Dm)]
    pub method: Method,
    /// Common treatment probability for IPW when the file has no propensity column
    #[arg(long)]
    pub p: Option<f64>,
    /// Covariates for OLS (an intercept is added)
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Noise variance used for the OLS covariance
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCheck {
    /// Exact mean and variance of an estimator over a design
    Moments,
    /// Exact expectations for the three-unit two-stage experiment
    TwoStage,
    /// Best pairing and best even partition by brute force
    Pairings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Crd,
    Bernoulli,
    MatchedPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Dm,
    Ipw,
    Aggregate,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    #[arg(long, value_enum, default_value_t = DesignKind::Crd)]
    pub design: DesignKind,
    /// Treated count for a completely randomized design; n/2 if omitted
    #[arg(long)]
    pub n1: Option<usize>,
    /// Treatment probability for a Bernoulli design
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Strata as 1-based unit lists, e.g. "1 2;3 4"
    #[arg(long)]
    pub strata: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value_t = OracleCheck::Moments)]
    pub check: OracleCheck,
    /// Science table CSV with header `unit,y1,y0` (moments)
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Dm)]
    pub estimator: EstimatorArg,
    /// Outcome probability for the two-stage experiment
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub baselines: BaselineInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Estimator error under the additive model
    Additive,
    /// Estimator error under the linear covariate model
    Linear,
    /// Optional stopping on fair coin flips
    Stopping,
    /// Three-unit two-stage adaptive experiment
    TwoStage,
    /// Synthetic control bias on a factor-model panel
    SynthBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimandArg {
    Sample,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Adaptive,
    CoinFlip,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Study::Additive)]
    pub study: Study,
    /// Replications
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub baselines: BaselineInput,
    /// Noise variance (additive model)
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha0: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value_t = Method::Dm)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = EstimandArg::Sample)]
    pub estimand: EstimandArg,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    pub noise: NoiseArg,
    /// Covariates for the linear model
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Treatment effect of the linear model
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Covariate coefficients of the linear model, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Noise standard deviation (linear model, factor panel)
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Stopping threshold
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub threshold: f64,
    /// Stopping horizon
    #[arg(long, default_value_t = 10_000)]
    pub horizon: usize,
    /// Outcome probability for the two-stage experiment
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Adaptive)]
    pub policy: PolicyArg,
    /// Units in the factor panel
    #[arg(long, default_value_t = 20)]
    pub units: usize,
    /// Pre-experiment periods in the factor panel
    #[arg(long, default_value_t = 50)]
    pub t0: usize,
    /// Experimental periods in the factor panel
    #[arg(long, default_value_t = 5)]
    pub post: usize,
    /// Largest treated set for the synthetic design
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Exhaustive)]
    pub mode: SearchMode,
}
