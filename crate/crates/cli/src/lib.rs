//! Batch driver behind the `degen` binary.
//!
//! Every command that writes a file also writes `<output>.meta.json` holding
//! the fully resolved configuration; `degen replay` re-runs from it.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

mod inspect;
mod simulate;
mod sweep;
mod theory;

pub use inspect::{ClassifyArgs, ClassifyConfig, FitArgs, FitConfig, FitMode};
pub use simulate::{Backend, SimulateArgs, SimulateConfig};
pub use sweep::{BifurcationArgs, BifurcationConfig, BifurcationMode, PhaseArgs};
pub use theory::TheoryArgs;

use degen_core::io;
use degen_core::sweeps::GridSpec;

#[derive(Debug, Parser)]
#[command(name = "degen", version, about = "Optimizer dynamics on degenerate monomial objectives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one optimizer trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Print closed-form constants and the fixed-point report as JSON.
    Theory(TheoryArgs),
    /// Sweep a (beta1, beta2) grid and classify every cell.
    Phase(PhaseArgs),
    /// Limit sets of the sharpness map, or of full Adam over beta2.
    Bifurcation(BifurcationArgs),
    /// Label a trajectory CSV with its empirical regime.
    Classify(ClassifyArgs),
    /// Fit a rate to a trajectory CSV.
    Fit(FitArgs),
    /// Re-run the command recorded in a metadata sidecar.
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
pub struct ReplayArgs {
    /// Sidecar written by an earlier run.
    #[arg(long)]
    pub meta: PathBuf,
    /// Output path; defaults to the one recorded in the sidecar.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an unusable configuration.
    Usage(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<degen_core::Error> for CliError {
    fn from(e: degen_core::Error) -> Self {
        use degen_core::Error as E;
        let io = match &e {
            E::Io(_) => true,
            E::Csv(c) => c.is_io_error(),
            E::Json(j) => j.is_io(),
            _ => false,
        };
        if io {
            CliError::Io(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// A fully resolved command, as stored in a sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "lowercase")]
pub enum Resolved {
    Simulate(SimulateConfig),
    Phase(GridSpec),
    Bifurcation(BifurcationConfig),
    Classify(ClassifyConfig),
    Fit(FitConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub resolved: Resolved,
    pub output: PathBuf,
    pub summary: serde_json::Value,
}

impl Meta {
    pub fn new(resolved: Resolved, output: &Path, summary: serde_json::Value) -> Self {
        Self {
            tool: "degen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            resolved,
            output: output.to_path_buf(),
            summary,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn write_beside(&self, output: &Path) -> CliResult<()> {
        io::write_json_file(&io::sidecar_path(output), self)?;
        Ok(())
    }
}

/// Runs a resolved command, writing its main output to `out` and the sidecar next to it.
pub fn execute(resolved: Resolved, out: &Path, jobs: usize) -> CliResult<serde_json::Value> {
    let summary = match &resolved {
        Resolved::Simulate(cfg) => simulate::run(cfg, out)?,
        Resolved::Phase(spec) => sweep::run_phase(spec, out, jobs)?,
        Resolved::Bifurcation(cfg) => sweep::run_bifurcation(cfg, out, jobs)?,
        Resolved::Classify(cfg) => inspect::write_report(&inspect::classify(cfg)?, out)?,
        Resolved::Fit(cfg) => inspect::write_report(&inspect::fit(cfg)?, out)?,
    };
    Meta::new(resolved, out, summary.clone()).write_beside(out)?;
    Ok(summary)
}

/// Runs one command; file-writing commands print their summary to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    let report = match cli.command {
        Command::Simulate(args) => {
            let out = args.out.clone();
            execute(Resolved::Simulate(args.resolve()?), &out, 1)?
        }
        Command::Theory(args) => theory::report(&args)?,
        Command::Phase(args) => {
            let (spec, out, jobs) = args.resolve()?;
            execute(Resolved::Phase(spec), &out, jobs)?
        }
        Command::Bifurcation(args) => {
            let (cfg, out, jobs) = args.resolve()?;
            execute(Resolved::Bifurcation(cfg), &out, jobs)?
        }
        Command::Classify(args) => {
            let cfg = args.resolve()?;
            match &args.out {
                Some(out) => execute(Resolved::Classify(cfg), out, 1)?,
                None => inspect::classify(&cfg)?,
            }
        }
        Command::Fit(args) => {
            let cfg = args.resolve()?;
            match &args.out {
                Some(out) => execute(Resolved::Fit(cfg), out, 1)?,
                None => inspect::fit(&cfg)?,
            }
        }
        Command::Replay(args) => {
            let meta = Meta::read(&args.meta)?;
            let out = args.out.unwrap_or(meta.output);
            execute(meta.resolved, &out, args.jobs)?
        }
    };
    print_json(&report)
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    use std::io::Write;
    let text = io::to_json_string(value)?;
    std::io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
