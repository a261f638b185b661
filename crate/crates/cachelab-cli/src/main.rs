//! `cachelab`: command-line driver for the cachelab experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 failed `--check` assertion.

mod commands;
mod output;
mod repro;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use output::{Artifact, Provenance, Sink};

#[derive(Debug, Parser)]
#[command(name = "cachelab", version, about = "Caching models, simulators and placement algorithms")]
struct Cli {
    /// Base seed; required by every command that draws random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file. Tabular results also get a JSON summary next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for repetitions.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic request trace (CSV: time, content_id, location_id).
    GenerateTrace(commands::GenerateTraceArgs),
    /// Fit a Zipf exponent by maximum likelihood.
    FitZipf(commands::FitZipfArgs),
    /// Estimate the catalog size from observed request counts.
    EstimateCatalog(commands::EstimateCatalogArgs),
    /// Replay a trace through an eviction policy.
    Simulate(commands::SimulateArgs),
    /// Che's approximation of the LRU hit probability under IRM.
    Che(commands::CheArgs),
    /// TTL timers from alpha-fair cache utility maximization.
    TtlCum(commands::TtlCumArgs),
    /// Online gradient ascent caching with its regret trajectory.
    Oga(commands::OgaArgs),
    /// Greedy femtocaching placement.
    Femto(commands::FemtoArgs),
    /// Placement in a two-level cache hierarchy.
    Hier(commands::HierArgs),
    /// Online bipartite caching against mLRU and lazy LRU.
    Bsca(commands::BscaArgs),
    /// Link-capacity scaling of grid networks.
    Gridlaws(commands::GridlawsArgs),
    /// Regenerate the data behind a figure or table.
    Repro(repro::ReproArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenerateTrace(_) => "generate-trace",
            Command::FitZipf(_) => "fit-zipf",
            Command::EstimateCatalog(_) => "estimate-catalog",
            Command::Simulate(_) => "simulate",
            Command::Che(_) => "che",
            Command::TtlCum(_) => "ttl-cum",
            Command::Oga(_) => "oga",
            Command::Femto(_) => "femto",
            Command::Hier(_) => "hier",
            Command::Bsca(_) => "bsca",
            Command::Gridlaws(_) => "gridlaws",
            Command::Repro(_) => "repro",
        }
    }

    fn tabular(&self) -> bool {
        matches!(
            self,
            Command::GenerateTrace(_)
                | Command::TtlCum(_)
                | Command::Oga(_)
                | Command::Bsca(_)
                | Command::Gridlaws(_)
                | Command::Repro(_)
        )
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Check(String),
}

impl CliError {
    pub fn runtime(e: impl Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<cachelab::Error> for CliError {
    fn from(e: cachelab::Error) -> Self {
        match e {
            cachelab::Error::InvalidInput(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Settings shared by every command.
pub struct Ctx {
    seed: Option<u64>,
}

impl Ctx {
    /// The seed, which `what` cannot run without.
    pub fn seed(&self, what: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("--seed is required for {what}")))
    }
}

/// Result of a command: the artifact and, for `repro --check`, the
/// individual assertions.
pub struct Run {
    pub artifact: Artifact,
    pub checks: Vec<(String, bool)>,
}

impl From<Artifact> for Run {
    fn from(artifact: Artifact) -> Self {
        Run {
            artifact,
            checks: Vec::new(),
        }
    }
}

fn dispatch(cmd: &Command, ctx: &Ctx) -> Result<Run, CliError> {
    Ok(match cmd {
        Command::GenerateTrace(a) => commands::generate_trace(a, ctx)?.into(),
        Command::FitZipf(a) => commands::fit_zipf(a)?.into(),
        Command::EstimateCatalog(a) => commands::estimate_catalog_cmd(a)?.into(),
        Command::Simulate(a) => commands::simulate(a, ctx)?.into(),
        Command::Che(a) => commands::che(a)?.into(),
        Command::TtlCum(a) => commands::ttl_cum(a)?.into(),
        Command::Oga(a) => commands::oga(a)?.into(),
        Command::Femto(a) => commands::femto(a, ctx)?.into(),
        Command::Hier(a) => commands::hier(a, ctx)?.into(),
        Command::Bsca(a) => commands::bsca(a, ctx)?.into(),
        Command::Gridlaws(a) => commands::gridlaws(a)?.into(),
        Command::Repro(a) => repro::run(a, ctx)?,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(CliError::runtime)?;
    let sink = Sink {
        out: cli.out.clone(),
        force: cli.force,
    };
    sink.precheck(cli.command.tabular())?;
    let ctx = Ctx { seed: cli.seed };
    let result = dispatch(&cli.command, &ctx)?;
    let prov = Provenance::new(cli.command.name(), &cli.command, cli.seed);
    sink.write(&prov, &result.artifact)?;
    let failed: Vec<&str> = result
        .checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.as_str())
        .collect();
    for (name, ok) in &result.checks {
        eprintln!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cachelab: {e}");
            ExitCode::from(e.code())
        }
    }
}
