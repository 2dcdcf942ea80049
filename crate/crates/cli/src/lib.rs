//! Command-line front end for `expdesign`: CSV ingestion, TOML run
//! configuration and JSON reports.
//!
//! A config file looks like
//!
//! ```toml
//! command = "minimax-bernoulli"
//! seed = 7
//!
//! [params]
//! n = 10
//! b = 1.0
//! ```
//!
//! `params` keys are the long flag names (with `_` or `-`). A flag given on
//! the command line overrides the file, which overrides the built-in default.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{Cli, Command};
use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fully resolved run: everything that determines the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub parameters: Value,
    pub results: Value,
    pub duration_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    command: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    #[serde(default)]
    params: toml::Table,
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn from_command_line(m: &ArgMatches, id: &str) -> bool {
    m.try_get_raw(id).is_ok() && m.value_source(id) == Some(ValueSource::CommandLine)
}

/// Overlays config-file values onto parsed flags wherever the flag was not
/// given explicitly.
fn resolve<T: FromArgMatches + Serialize + DeserializeOwned>(m: &ArgMatches, params: &toml::Table) -> Result<T> {
    let parsed = T::from_arg_matches(m)?;
    let Value::Object(mut map) = serde_json::to_value(&parsed)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (key, value) in params {
        let id = key.replace('-', "_");
        if !map.contains_key(&id) {
            return Err(CliError::Config(format!("unknown parameter '{key}'")));
        }
        if !from_command_line(m, &id) {
            map.insert(id, serde_json::to_value(value)?);
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
}

fn resolve_command(name: &str, m: &ArgMatches, p: &toml::Table) -> Result<Command> {
    Ok(match name {
        "minimax-bernoulli" => Command::MinimaxBernoulli(resolve(m, p)?),
        "crd-risk" => Command::CrdRisk(resolve(m, p)?),
        "matched-pairs" => Command::MatchedPairs(resolve(m, p)?),
        "da-opt" => Command::DaOpt(resolve(m, p)?),
        "d-opt" => Command::DOpt(resolve(m, p)?),
        "synth-design" => Command::SynthDesign(resolve(m, p)?),
        "bias-bound" => Command::BiasBound(resolve(m, p)?),
        "estimate" => Command::Estimate(resolve(m, p)?),
        "oracle" => Command::Oracle(resolve(m, p)?),
        "simulate" => Command::Simulate(resolve(m, p)?),
        other => return Err(CliError::Config(format!("unknown command '{other}'"))),
    })
}

fn command_params(cmd: &Command) -> Result<Value> {
    Ok(match cmd {
        Command::MinimaxBernoulli(a) => serde_json::to_value(a)?,
        Command::CrdRisk(a) => serde_json::to_value(a)?,
        Command::MatchedPairs(a) => serde_json::to_value(a)?,
        Command::DaOpt(a) => serde_json::to_value(a)?,
        Command::DOpt(a) => serde_json::to_value(a)?,
        Command::SynthDesign(a) => serde_json::to_value(a)?,
        Command::BiasBound(a) => serde_json::to_value(a)?,
        Command::Estimate(a) => serde_json::to_value(a)?,
        Command::Oracle(a) => serde_json::to_value(a)?,
        Command::Simulate(a) => serde_json::to_value(a)?,
    })
}

/// Parsed invocation, ready to run.
#[derive(Debug)]
pub struct Invocation {
    pub command: Command,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<PathBuf>,
}

impl Invocation {
    pub fn config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            command: self.command.name().to_string(),
            seed: self.seed,
            parameters: command_params(&self.command)?,
        })
    }
}

/// Parses arguments (first item is the program name) and merges any
/// `--config` file.
pub fn parse_invocation<I, T>(argv: I) -> Result<Invocation>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let mut matches = Cli::command().try_get_matches_from(&argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let file = match &cli.global.config {
        Some(p) => read_config(p)?,
        None => ConfigFile::default(),
    };
    if matches.subcommand().is_none() {
        let Some(name) = &file.command else {
            return Err(CliError::Config("no command given on the command line or in the config file".into()));
        };
        argv.push(name.into());
        matches = Cli::command().try_get_matches_from(&argv)?;
    }
    let (name, sub) = matches.subcommand().expect("subcommand present");
    // aliases resolve to the canonical name in the parsed matches
    let name = name.to_string();
    if let Some(fc) = &file.command {
        let canonical = if fc == "theorem4-bound" { "bias-bound" } else { fc.as_str() };
        if canonical != name {
            return Err(CliError::Config(format!("config is for '{fc}' but '{name}' was requested")));
        }
    }
    let command = resolve_command(&name, sub, &file.params)?;
    let explicit = |id: &str| from_command_line(&matches, id) || from_command_line(sub, id);
    let global = Cli::from_arg_matches(&matches)?.global;
    let seed = if explicit("seed") { global.seed } else { file.seed.unwrap_or(global.seed) };
    let threads = if explicit("threads") { global.threads } else { file.threads.unwrap_or(global.threads) };
    let out = if explicit("out") { global.out } else { file.out.or(global.out) };
    Ok(Invocation { command, seed, threads, out })
}

/// Runs an invocation on a dedicated thread pool.
pub fn execute(inv: &Invocation) -> Result<RunReport> {
    let config = inv.config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inv.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let results = pool.install(|| commands::dispatch(&inv.command, inv.seed))?;
    Ok(RunReport {
        tool: "expdesign".into(),
        version: TOOL_VERSION.into(),
        command: config.command,
        seed: config.seed,
        parameters: config.parameters,
        results,
        duration_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Parse, run and write the report; returns the report text.
pub fn run<I, T>(argv: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = parse_invocation(argv)?;
    let report = execute(&inv)?;
    let text = report.to_json()?;
    if let Some(path) = &inv.out {
        std::fs::write(path, &text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    }
    Ok(text)
}
