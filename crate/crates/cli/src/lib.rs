//! Command-line front end: simulation, training, detection, benchmarking
//! and LP export, wired for reproducible runs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical/solver error,
//! 4 I/O error.

mod commands;

use clap::{Args, Parser, Subcommand};
use otcps_core::Error;

/// Default output directory environment variable.
pub const OUT_DIR_ENV: &str = "OTCPS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "otcps",
    about = "Optimal-transport-driven attack detection for stochastic LTI systems",
    version
)]
pub struct Cli {
    /// Output directory (default: $OTCPS_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    pub out_dir: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

/// Scenario selection and overrides shared by scenario-driven commands.
/// Precedence: command-line flags > config file > preset defaults.
#[derive(Debug, Clone, Args, Default)]
pub struct ScenarioArgs {
    /// Scenario preset name.
    #[arg(long)]
    pub preset: Option<String>,

    /// TOML scenario spec; may itself name a preset.
    #[arg(long)]
    pub config: Option<String>,

    /// Global seed override.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Horizon override (steps).
    #[arg(long)]
    pub horizon: Option<usize>,

    /// Attack start time override (steps).
    #[arg(long)]
    pub t_attack: Option<usize>,

    #[arg(long)]
    pub n1: Option<usize>,

    #[arg(long)]
    pub n2: Option<usize>,

    #[arg(long)]
    pub eps1: Option<f64>,

    #[arg(long)]
    pub eps2: Option<f64>,

    /// Kernel bandwidth override.
    #[arg(long)]
    pub bandwidth: Option<f64>,

    /// Score clip bound override.
    #[arg(long)]
    pub clip: Option<f64>,

    /// Disable score clipping.
    #[arg(long)]
    pub no_clip: bool,

    /// Drift-offset margin override.
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a residual stream and write it as CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,

        /// Simulate the attacked run instead of the nominal one.
        #[arg(long)]
        attacked: bool,

        /// Output CSV path (default: <out-dir>/residuals.csv).
        #[arg(long)]
        out: Option<String>,
    },

    /// Train the detector and write the model artifact JSON.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,

        /// Nominal training residuals CSV (use with --x2 instead of
        /// simulated training data).
        #[arg(long, requires = "x2")]
        x1: Option<String>,

        /// Attacked training residuals CSV.
        #[arg(long, requires = "x1")]
        x2: Option<String>,

        /// Output model path (default: <out-dir>/model.json).
        #[arg(long)]
        out: Option<String>,
    },

    /// Run the detector over a residual CSV using a trained model.
    Detect {
        /// Model artifact JSON from `train`.
        #[arg(long)]
        model: String,

        /// Residual stream CSV from `simulate`.
        #[arg(long)]
        input: String,

        /// Fixed threshold.
        #[arg(long, conflicts_with = "eta")]
        h: Option<f64>,

        /// Calibrate the threshold from the tail bound at this
        /// false-positive budget.
        #[arg(long)]
        eta: Option<f64>,

        /// Output prefix (default: <out-dir>/detect); writes
        /// <prefix>.csv and <prefix>.json.
        #[arg(long)]
        out_prefix: Option<String>,
    },

    /// Monte Carlo ADD/FAR sweep for the trained detector and the
    /// Gaussian-LLR CUSUM baseline.
    Bench {
        #[command(flatten)]
        scenario: ScenarioArgs,

        /// Number of Monte Carlo trials.
        #[arg(long, default_value_t = 200)]
        trials: usize,

        /// Threshold grid: `auto`, `lo:hi:n` (log-spaced), or a
        /// comma-separated list.
        #[arg(long, default_value = "auto")]
        h_grid: String,

        /// Which detectors to run.
        #[arg(long, default_value = "both", value_parser = ["ot", "baseline", "both"])]
        detector: String,

        /// Output prefix (default: <out-dir>/bench); writes
        /// <prefix>-<detector>.csv/.json per detector.
        #[arg(long)]
        out_prefix: Option<String>,
    },

    /// Export the worst-case-distribution LP as fixed-format MPS.
    ExportMps {
        #[command(flatten)]
        scenario: ScenarioArgs,

        /// Nominal training residuals CSV (use with --x2 instead of
        /// simulated training data).
        #[arg(long, requires = "x2")]
        x1: Option<String>,

        /// Attacked training residuals CSV.
        #[arg(long, requires = "x1")]
        x2: Option<String>,

        /// Output MPS path (default: <out-dir>/problem.mps).
        #[arg(long)]
        out: Option<String>,
    },
}

/// Maps an error to the documented exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Invalid { .. }
        | Error::Dimension { .. }
        | Error::Parse { .. } => 2,
        Error::Numerical { .. } | Error::NoConvergence { .. } | Error::Lp { .. } => 3,
        Error::Io(_) | Error::IoPath { .. } => 4,
    }
}

/// Parses `argv` and runs the selected command; returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var(OUT_DIR_ENV).ok())
        .unwrap_or_else(|| ".".into());
    let result = match cli.command {
        Command::Simulate {
            scenario,
            attacked,
            out,
        } => commands::simulate::run(&out_dir, &scenario, attacked, out.as_deref()),
        Command::Train {
            scenario,
            x1,
            x2,
            out,
        } => commands::train::run(
            &out_dir,
            &scenario,
            x1.as_deref(),
            x2.as_deref(),
            out.as_deref(),
        ),
        Command::Detect {
            model,
            input,
            h,
            eta,
            out_prefix,
        } => commands::detect::run(&out_dir, &model, &input, h, eta, out_prefix.as_deref()),
        Command::Bench {
            scenario,
            trials,
            h_grid,
            detector,
            out_prefix,
        } => commands::bench::run(
            &out_dir,
            &scenario,
            trials,
            &h_grid,
            &detector,
            out_prefix.as_deref(),
        ),
        Command::ExportMps {
            scenario,
            x1,
            x2,
            out,
        } => commands::export_mps::run(
            &out_dir,
            &scenario,
            x1.as_deref(),
            x2.as_deref(),
            out.as_deref(),
        ),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
