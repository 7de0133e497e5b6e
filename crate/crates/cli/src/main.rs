//! `fatiguefit`: fit probabilistic stress-life models with a fatigue limit
//! to censored fatigue data, compare them by information criteria, and export
//! profile, bootstrap, quantile, survival, and probability-plot tables.
//!
//! Every command writes its artifacts plus a `manifest.json` into `--out`.
//! The manifest records the command, its flags, the dataset path and content
//! hash, the model and fit settings, and the files written, so a run can be
//! reproduced byte for byte from the manifest alone. Nothing is timestamped
//! and all randomness is seeded, so re-running with the same flags yields
//! identical bytes.

mod manifest;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fatiguefit_core::curves::LifeScale;
use fatiguefit_core::likelihood::{LogBase, ModelName};
use fatiguefit_core::stress::TransformKind;

use ops::{CliResult, ModelInputs};

fn parse_transform(s: &str) -> Result<TransformKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "walker" => Ok(TransformKind::Walker),
        "nwalker" => Ok(TransformKind::NormalizedWalker),
        "swalker" => Ok(TransformKind::SignedWalker),
        "identity" => Ok(TransformKind::Identity),
        other => Err(format!(
            "unknown stress transform '{other}', expected walker, nwalker, swalker, or identity"
        )),
    }
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    match s {
        "10" => Ok(LogBase::Ten),
        "e" | "E" => Ok(LogBase::E),
        other => Err(format!("unknown log base '{other}', expected 10 or e")),
    }
}

/// Flags shared by the commands that fit a model to raw data.
#[derive(Args)]
struct ModelArgs {
    /// CSV dataset to fit
    #[arg(long)]
    data: PathBuf,

    /// Model variant: Ia, Ib, IIa, IIb, IIIa, or IIIb
    #[arg(long)]
    model: ModelName,

    /// Equivalent-stress transform
    #[arg(long, value_parser = parse_transform, default_value = "identity")]
    stress: TransformKind,

    /// Base of the life logarithm: 10 or e
    #[arg(long, value_parser = parse_log_base, default_value = "10")]
    log_base: LogBase,

    /// RNG seed for multi-start and resampling
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of optimizer starts
    #[arg(long, default_value_t = 24)]
    starts: usize,

    /// Rename a dataset column, NAME=HEADER (repeatable)
    #[arg(long, value_name = "NAME=HEADER")]
    map: Vec<String>,

    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

impl ModelArgs {
    fn into_inputs(self) -> ModelInputs {
        ModelInputs {
            data: self.data,
            model: self.model,
            stress: self.stress,
            log_base: self.log_base,
            seed: self.seed,
            starts: self.starts,
            map: self.map,
            out: self.out,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fatiguefit",
    version,
    about = "Calibrate probabilistic stress-life models with a fatigue limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model by maximum likelihood
    Fit {
        #[command(flatten)]
        model: Box<ModelArgs>,
    },
    /// Rank saved fits of one dataset by information criteria
    Icompare {
        /// fit.json artifacts, all from the same dataset
        #[arg(required = true, num_args = 2.., value_name = "FIT_JSON")]
        fits: Vec<PathBuf>,

        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Profile the log-likelihood over a fixed fatigue limit
    Profile {
        #[command(flatten)]
        model: Box<ModelArgs>,

        /// Parameter to profile (only A3 is supported)
        #[arg(long, default_value = "A3")]
        param: String,

        /// Fatigue-limit grid, LO:HI:COUNT
        #[arg(long)]
        grid: String,
    },
    /// Bootstrap confidence intervals for the fitted parameters
    Bootstrap {
        #[command(flatten)]
        model: Box<ModelArgs>,

        /// Number of bootstrap replicates
        #[arg(long, default_value_t = 1000)]
        reps: usize,

        /// Confidence level, strictly between 0 and 1
        #[arg(long, default_value_t = 0.90)]
        level: f64,

        /// Resampling strata: none, or group to resample within groups
        #[arg(long, default_value = "none", value_parser = ["none", "group"])]
        stratify_by: String,
    },
    /// Life quantile curves over a stress grid, from a saved fit
    Curves {
        /// fit.json artifact
        #[arg(long)]
        fit: PathBuf,

        /// Comma-separated failure probabilities
        #[arg(long, default_value = "0.05,0.5,0.95")]
        probs: String,

        /// Equivalent-stress grid, LO:HI:COUNT
        #[arg(long)]
        grid: String,

        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Survival curve at one loading, from a saved fit
    Survival {
        /// fit.json artifact
        #[arg(long)]
        fit: PathBuf,

        /// Maximum stress of the loading
        #[arg(long)]
        smax: f64,

        /// Stress ratio of the loading
        #[arg(long)]
        ratio: Option<f64>,

        /// Cycle grid, LO:HI:COUNT (geometrically spaced)
        #[arg(long, default_value = "1e2:1e8:200")]
        grid: String,

        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Pooled probability plot of transformed lives at failure
    Pplot {
        /// CSV dataset
        #[arg(long)]
        data: PathBuf,

        /// Model variant naming the kernel family
        #[arg(long)]
        model: ModelName,

        /// Life scale for plotting: cycles or log
        #[arg(long, default_value = "log")]
        life_scale: LifeScale,

        /// Rename a dataset column, NAME=HEADER (repeatable)
        #[arg(long, value_name = "NAME=HEADER")]
        map: Vec<String>,

        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn run(self) -> CliResult {
        match self {
            Command::Fit { model } => ops::cmd_fit(&model.into_inputs()),
            Command::Icompare { fits, out } => ops::cmd_icompare(&fits, &out),
            Command::Profile { model, param, grid } => {
                ops::cmd_profile(&model.into_inputs(), &param, &grid)
            }
            Command::Bootstrap { model, reps, level, stratify_by } => ops::cmd_bootstrap(
                &model.into_inputs(),
                reps,
                level,
                stratify_by == "group",
            ),
            Command::Curves { fit, probs, grid, out } => ops::cmd_curves(&fit, &probs, &grid, &out),
            Command::Survival { fit, smax, ratio, grid, out } => {
                ops::cmd_survival(&fit, smax, ratio, &grid, &out)
            }
            Command::Pplot { data, model, life_scale, map, out } => {
                ops::cmd_pplot(&data, model, life_scale, &map, &out)
            }
        }
    }
}

/// Cap worker parallelism when FATIGUEFIT_THREADS is set. Results never
/// depend on the thread count; only wall time does.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("FATIGUEFIT_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match cli.command.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.err);
            ExitCode::from(e.code)
        }
    }
}
