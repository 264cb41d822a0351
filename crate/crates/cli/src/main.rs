//! `obkit`: generate OB ground truth, evaluate predictions, simulate and run
//! scribble refinement, and serve the annotation API.
//!
//! Exit status: 0 on success, 1 on bad input (one diagnostic line on
//! stderr), 2 on internal failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use obkit_core::predictors::PredictorSpec;

#[derive(Debug, Parser)]
#[command(name = "obkit", version, about = "Occlusion-boundary toolkit")]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// error, warn, info, debug or trace; OBKIT_LOG takes precedence.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render scenes and write a benchmark with exact OB ground truth.
    Generate(GenerateArgs),
    /// Score probability maps against ground-truth masks.
    Evaluate(EvaluateArgs),
    /// Run the simulated scribble loop over an image set.
    Simulate(SimulateArgs),
    /// Apply one scribble document to an image.
    Refine(RefineArgs),
    /// Start the annotation HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scene description file; repeat for several scenes.
    #[arg(long = "scene", required = true)]
    pub scenes: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Rays per pixel side (1 or 2); overrides the scene file.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub supersample: Option<u8>,
    #[arg(long, default_value_t = 3.0)]
    pub gap_factor: f64,
    #[arg(long, default_value_t = 8)]
    pub walk_limit: usize,
    #[arg(long, default_value_t = 0.5)]
    pub contact_tol: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of predictions (`.obfmap` or grayscale images), matched to GT by file stem.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of GT masks.
    #[arg(long)]
    pub gt: PathBuf,
    /// Matching distance as a fraction of the image diagonal.
    #[arg(long, default_value_t = 0.0075)]
    pub max_dist: f64,
    #[arg(long, default_value_t = 99)]
    pub thresholds: usize,
    /// Maximum-cardinality matching instead of the greedy default.
    #[arg(long)]
    pub exact: bool,
    /// `summary.json` from `obkit simulate`, for avg_fn / avg_fp.
    #[arg(long)]
    pub simulation: Option<PathBuf>,
    /// avg_fp is printed scaled by 10^N.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(3..=4))]
    pub fp_scale: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PostArgs {
    #[arg(long, default_value_t = 0.7)]
    pub threshold: f32,
    /// Keep only 0/1 values after thresholding.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// gradient | oracle:<gt-dir>,<fn_rate>,<fp_rate> | extern:<command>
    #[arg(long)]
    pub predictor: PredictorSpec,
    #[arg(long, default_value_t = 12)]
    pub radius: u32,
    #[arg(long, default_value_t = 30)]
    pub min_seg_len: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_segs: Option<u64>,
    /// Run up to K rounds of one FN and one FP scribble each.
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u64).range(1..))]
    pub progressive: Option<u64>,
    /// Maximum per-pixel scribble displacement.
    #[arg(long, default_value_t = 3)]
    pub perturb: u32,
    /// Maximum length change per scribble end, as a fraction of its length.
    #[arg(long, default_value_t = 0.2)]
    pub length_jitter: f64,
    #[arg(long, default_value_t = 0.0075)]
    pub max_dist: f64,
    #[command(flatten)]
    pub post: PostArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Scribble document (JSON).
    #[arg(long)]
    pub scribbles: PathBuf,
    #[arg(long)]
    pub predictor: PredictorSpec,
    /// Previous output; the initial prediction when absent.
    #[arg(long)]
    pub prev: Option<PathBuf>,
    #[command(flatten)]
    pub post: PostArgs,
    /// Refined map (`OBFMAP01`).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the thin boundary mask here.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    /// Predictor for sessions that do not name one.
    #[arg(long, default_value = "gradient")]
    pub predictor: PredictorSpec,
    #[command(flatten)]
    pub post: PostArgs,
}

fn init_logging(level: log::LevelFilter) {
    let mut builder = env_logger::Builder::new();
    builder.filter_level(level);
    if let Ok(spec) = std::env::var("OBKIT_LOG") {
        builder.parse_filters(&spec);
    }
    builder.format_timestamp(None).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    init_logging(cli.log_level);
    match std::panic::catch_unwind(|| commands::run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(2),
    }
}
