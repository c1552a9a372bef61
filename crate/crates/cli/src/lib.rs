//! Command-line front end for the `gpuscale` analysis library.
//!
//! The binary is a thin wrapper around [`run`]; the subcommands are also
//! callable from Rust through [`commands`].
//!
//! Exit codes are stable:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure |
//! | 2 | usage error |
//! | 3 | missing input |
//! | 4 | parse error or document schema mismatch |
//! | 5 | validation failure |
//! | 6 | analysis not defined on the inputs |

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpuscale::metrics::{AggregationOptions, EnergyMethod};
use gpuscale::tradeoff::DEFAULT_MAX_SLOWDOWN;
use gpuscale::Validation;

pub mod canonical;
pub mod commands;
pub mod documents;
pub mod error;

pub use error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GPUSCALE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "gpuscale",
    version,
    about = "Scaling, energy and power-cap analysis of multi-GPU training runs"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Reject any malformed telemetry row or uncovered epoch window (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    pub strict: bool,
    /// Drop malformed telemetry rows and report them as warnings.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Compute epoch energy as mean sampled power times wall time.
    #[arg(long, global = true)]
    pub paper_energy: bool,
    /// Average epoch times at each GPU count before fitting.
    #[arg(long, global = true)]
    pub collapse_replicates: bool,
    /// Largest acceptable fractional slowdown when choosing a power cap.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_SLOWDOWN)]
    pub max_slowdown: f64,
    /// Power cap in watts that trade-off curves are normalized against.
    #[arg(long, global = true, default_value_t = 250.0)]
    pub baseline_cap: f64,
    /// Seed overriding the one in a simulation spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory outputs are written to.
    #[arg(short, long, global = true, env = OUT_DIR_ENV, default_value = "gpuscale-out")]
    pub out_dir: PathBuf,
}

impl GlobalArgs {
    pub fn aggregation(&self) -> AggregationOptions {
        AggregationOptions {
            energy: if self.paper_energy {
                EnergyMethod::MeanPower
            } else {
                EnergyMethod::Trapezoid
            },
            validation: if self.lenient {
                Validation::Lenient
            } else {
                Validation::Strict
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupField {
    Model,
    Domain,
    PowerCap,
    ClockCap,
    Batch,
}

impl GroupField {
    pub fn name(self) -> &'static str {
        match self {
            GroupField::Model => "model",
            GroupField::Domain => "domain",
            GroupField::PowerCap => "power_cap",
            GroupField::ClockCap => "clock_cap",
            GroupField::Batch => "batch",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate run directories into per-epoch metrics.
    ///
    /// Writes metrics.json and epoch_metrics.csv.
    Ingest {
        /// Run directories, searched recursively for manifest.txt,
        /// telemetry.csv and epochs.csv.
        paths: Vec<PathBuf>,
        /// Telemetry file of an explicitly named run; repeat per run.
        #[arg(long)]
        telemetry: Vec<PathBuf>,
        /// Epoch file, paired with --telemetry by position.
        #[arg(long)]
        epochs: Vec<PathBuf>,
        /// Manifest file, paired with --telemetry by position.
        #[arg(long)]
        manifest: Vec<PathBuf>,
    },
    /// Fit epoch time against GPU count for each run group.
    ///
    /// Writes fits.json.
    Fit {
        /// Metrics documents written by `ingest`.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Manifest fields that define a group.
        #[arg(
            long,
            value_enum,
            value_delimiter = ',',
            default_value = "model,power-cap,clock-cap"
        )]
        group_by: Vec<GroupField>,
        /// Relative residual beyond which a point counts as off the law.
        #[arg(long, default_value_t = gpuscale::scaling::DEFAULT_KNEE_THRESHOLD)]
        knee_threshold: f64,
    },
    /// Build power-cap trade-off curves and recommend a cap per family.
    ///
    /// Writes tradeoff.json.
    Tradeoff {
        /// Metrics documents written by `ingest`.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Grid carbon intensity in g CO2 per kWh; adds emissions per cap.
        #[arg(long)]
        carbon_intensity: Option<f64>,
    },
    /// Generate a synthetic corpus from a TOML spec.
    Simulate { spec: PathBuf },
    /// Combine documents into report.json and plot-data CSVs.
    Report {
        #[arg(long)]
        fits: Option<PathBuf>,
        #[arg(long)]
        tradeoff: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Rebuild from the documents embedded in an earlier report.
        #[arg(long, conflicts_with_all = ["fits", "tradeoff", "metrics"])]
        from_report: Option<PathBuf>,
    },
}

/// What a command produced: files written and warnings raised.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest {
            paths,
            telemetry,
            epochs,
            manifest,
        } => commands::ingest::run(g, paths, telemetry, epochs, manifest),
        Command::Fit {
            metrics,
            group_by,
            knee_threshold,
        } => commands::fit::run(g, metrics, group_by, *knee_threshold),
        Command::Tradeoff {
            metrics,
            carbon_intensity,
        } => commands::tradeoff::run(g, metrics, *carbon_intensity),
        Command::Simulate { spec } => commands::simulate::run(g, spec),
        Command::Report {
            fits,
            tradeoff,
            metrics,
            from_report,
        } => commands::report::run(
            g,
            fits.as_deref(),
            tradeoff.as_deref(),
            metrics.as_deref(),
            from_report.as_deref(),
        ),
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(path.to_path_buf())
}
