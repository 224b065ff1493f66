//! `spreadchan` command-line front end. Every command writes one table,
//! preceded by a manifest from which `replay` reproduces it byte for byte.

mod commands;
mod output;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use output::{write_csv, write_json, Manifest};

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "spreadchan", version, about = "Estimate the magnitude of a phase-randomized displacement channel")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Displacement phase distribution: uniform, vonmises:mu=..,kappa=.., discrete:phi@w,...
    #[arg(long, global = true, default_value = "uniform")]
    pub phases: String,
    /// Fock truncation: `auto` or an integer.
    #[arg(long, global = true, default_value = "auto")]
    pub dim: String,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dark-noise mixing `p -> (1 - eps) p + eps/2`.
    #[arg(long, global = true, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Fidelity evaluation: closed forms where known, or always numeric.
    #[arg(long, global = true, value_enum, default_value_t = Route::Auto)]
    pub route: Route,
    /// Require a seed and fail (exit 4) on ambiguous estimates.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Add a wall-clock timestamp to the manifest.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub stamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Auto,
    Numeric,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Self-projection success probability p0 against alpha.
    Fidelity {
        #[arg(long = "state", required = true)]
        states: Vec<String>,
        /// Range `start:step:stop` (inclusive) or a single value.
        #[arg(long, default_value = "0:0.02:1.5")]
        alpha: String,
        /// Evaluate at one displacement phase instead of averaging.
        #[arg(long)]
        fixed_phi: Option<f64>,
    },
    /// Classical Fisher information of self-projection against alpha.
    Cfi {
        #[arg(long = "state", required = true)]
        states: Vec<String>,
        #[arg(long, default_value = "0:0.02:1.5")]
        alpha: String,
    },
    /// Monte-Carlo experiments.
    Mc {
        #[command(subcommand)]
        mode: McMode,
    },
    /// Quadrature detection against self-projection for a squeezed probe.
    Homodyne {
        #[arg(long, default_value_t = 1.5)]
        r: f64,
        #[arg(long, default_value = "0:0.02:1.5")]
        alpha: String,
        /// Measured quadrature angle.
        #[arg(long, default_value_t = 0.0)]
        angle: f64,
        /// Points of the position grid.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Wigner function on a square phase-space grid.
    Wigner {
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        /// Grid spans `[-w, w]` in x and p; sized from the state's energy and quadrature spread if absent.
        #[arg(long)]
        half_width: Option<f64>,
    },
    /// Re-run the command recorded in an artifact's manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McMode {
    /// Click counts and estimates of individual experiments.
    Simulate {
        #[arg(long = "state", required = true)]
        states: Vec<String>,
        #[arg(long)]
        alpha: String,
        /// Shots per experiment.
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        trials: u64,
    },
    /// Mean and spread of the overlap over randomly drawn phases.
    Overlap {
        #[arg(long = "state", required = true)]
        states: Vec<String>,
        #[arg(long, default_value = "0:0.05:1.5")]
        alpha: String,
        /// Phase draws per alpha.
        #[arg(long, default_value_t = 50)]
        reps: u64,
    },
    /// Estimator RMSE against the Cramer-Rao scale.
    Rmse {
        #[arg(long = "state", required = true)]
        states: Vec<String>,
        #[arg(long)]
        alpha: String,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 500)]
        trials: u64,
    },
}

/// Failure carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_AMBIGUOUS: u8 = 4;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_PARSE, message: message.into() }
    }
}

impl From<spreadchan::Error> for Failure {
    fn from(e: spreadchan::Error) -> Self {
        use spreadchan::Error as E;
        let code = match e {
            E::Parse { .. } | E::Domain(_) | E::InvalidDimension(_) | E::Shape(_) => EXIT_PARSE,
            E::Truncation { .. } | E::Quadrature(_) | E::Degenerate { .. } | E::NonFinite(_) => EXIT_NUMERIC,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure { code: 1, message: format!("{e:#}") }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

/// Recovers the invocation recorded in a CSV or JSON artifact.
fn recorded_invocation(path: &PathBuf) -> Result<Cli, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let args = if text.trim_start().starts_with('{') {
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        doc["manifest"]["args"].clone()
    } else {
        let line = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix("# args: "))
            .ok_or_else(|| Failure::usage(format!("{}: no manifest args line", path.display())))?;
        serde_json::from_str(line).map_err(|e| Failure::usage(format!("bad manifest args: {e}")))?
    };
    serde_json::from_value(args).map_err(|e| Failure::usage(format!("bad manifest args: {e}")))
}

fn run(mut cli: Cli) -> Result<u8, Failure> {
    if let Command::Replay { manifest } = &cli.command {
        let mut recorded = recorded_invocation(manifest)?;
        if matches!(recorded.command, Command::Replay { .. }) {
            return Err(Failure::usage("manifest records a replay"));
        }
        recorded.common.out = cli.common.out.take();
        recorded.common.stamp = cli.common.stamp;
        cli = recorded;
    }
    let report = commands::execute(&cli)?;
    let manifest = Manifest {
        command: report.command.clone(),
        args: serde_json::to_value(&cli).map_err(anyhow::Error::from)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: report.seed,
        truncation: report.truncation.clone(),
        notes: report.notes.clone(),
        timestamp: cli.common.stamp.then(|| {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
        }),
    };
    let mut buf = Vec::new();
    match cli.common.format {
        Format::Csv => write_csv(&mut buf, &manifest, &report.table)?,
        Format::Json => write_json(&mut buf, &manifest, &report.table)?,
    }
    match &cli.common.out {
        Some(path) => fs::write(path, &buf)?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    for note in &report.notes {
        eprintln!("warning: {note}");
    }
    if cli.common.strict && report.ambiguous > 0 {
        eprintln!("error: {} ambiguous estimate(s) in strict mode", report.ambiguous);
        return Ok(EXIT_AMBIGUOUS);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
