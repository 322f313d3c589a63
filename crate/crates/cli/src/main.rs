//! `sre-eval`: trial validation, detection cost, DET analysis, bootstrap
//! intervals, embedding backends and synthetic data from the command line.
//!
//! Exit codes: 0 success, 1 evaluation-level failure (rejected submission,
//! no scorable partition cell, ...), 2 input, parse or usage error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "sre-eval", version, about = "Speaker/person detection evaluation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct GlobalOpts {
    /// Seed for stochastic commands (bootstrap, visual, synth); required by them.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Partition schema; `auto` follows the key's track.
    #[arg(long, global = true, value_enum, default_value_t = SchemaArg::Auto)]
    pub schema: SchemaArg,
    /// Keep 3-segment enrollment trials and partition them by enrollment count.
    #[arg(long = "include-3seg", global = true)]
    pub include_3seg: bool,
    /// Operating point `c_miss,c_fa,p_target`; repeat for several. Defaults
    /// to 1,1,0.01 and 1,1,0.05.
    #[arg(long = "points", global = true, value_name = "C_MISS,C_FA,P_TARGET")]
    pub points: Vec<String>,
    /// Directory receiving result files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaArg {
    Auto,
    Audio,
    AudioVisual,
    Visual,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Check a score file against a key; prints a JSON report.
    Validate(PairArgs),
    /// Actual and minimum primary cost with per-cell breakdown.
    Score(PairArgs),
    /// Equalized DET curve and equal error rate.
    Det(PairArgs),
    /// Bootstrap confidence intervals of the primary cost.
    Bootstrap(BootstrapArgs),
    /// Embedding backend: fit, score, calibrate, fuse.
    #[command(subcommand)]
    Backend(BackendCommand),
    /// Visual-track scoring from face encodings.
    #[command(subcommand)]
    Visual(VisualCommand),
    /// Generate a synthetic evaluation.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PairArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Actual,
    Min,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplingArg {
    Models,
    ModelsAndSegments,
}

#[derive(Debug, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Both)]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value_t = ResamplingArg::Models)]
    pub resampling: ResamplingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringArg {
    Plda,
    Cosine,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum BackendCommand {
    /// Train whitening, LDA and PLDA on labeled embeddings.
    Fit(FitArgs),
    /// Score a key with a trained backend model.
    Score(BackendScoreArgs),
    /// Fit a logistic calibration on a key and apply it.
    Calibrate(CalibrateArgs),
    /// Linear fusion of several score files.
    Fuse(FuseArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Labeled out-of-domain training embeddings.
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled in-domain embeddings (whitening statistics, MAP adaptation, s-norm cohort).
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Backend configuration JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lda_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub scoring: Option<ScoringArg>,
    #[arg(long)]
    pub map_alpha: Option<f64>,
    #[arg(long)]
    pub snorm_top_k: Option<usize>,
    #[arg(long, default_value = "backend_model.json")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct BackendScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    /// `modelid<TAB>segmentid` enrollment list.
    #[arg(long)]
    pub enrollment: PathBuf,
    /// Embeddings of enrollment and test segments.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "scores.tsv")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Effective prior; defaults to the prior matching the mean log-beta of the operating points.
    #[arg(long)]
    pub prior: Option<f64>,
    /// Score file to calibrate instead of the training scores.
    #[arg(long)]
    pub apply: Option<PathBuf>,
    #[arg(long, default_value = "calibrated_scores.tsv")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct FuseArgs {
    /// Score files to combine (repeat the flag).
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    /// Fixed weights, one per score file, comma-separated. Without them the
    /// weights are trained on `--key`.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub offset: f64,
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<f64>,
    #[arg(long, default_value = "fused_scores.tsv")]
    pub output: String,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum VisualCommand {
    /// Max-cosine scoring against k-means++ pseudo-encodings of each video.
    Score(VisualScoreArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct VisualScoreArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub enrollment: PathBuf,
    /// Encodings of enrollment images.
    #[arg(long)]
    pub enroll_encodings: PathBuf,
    /// Frame encodings; the speaker column holds the video id.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value = "visual_scores.tsv")]
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackArg {
    Audio,
    AudioVisual,
    Visual,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Generator configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub track: Option<TrackArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
