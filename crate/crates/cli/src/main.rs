use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fragnet::FragError;

mod commands;
mod config;

/// Writer identification from word images with FragNet.
#[derive(Debug, Parser)]
#[command(name = "fragnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic multi-writer word dataset.
    Synth(SynthArgs),
    /// Train FragNet or WordImgNet.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Write a fragment evidence heatmap for one word image.
    Heatmap(HeatmapArgs),
    /// Print per-layer convolution FLOPs.
    Flops(FlopsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub writers: usize,
    /// Training words per writer.
    #[arg(long, default_value_t = 40)]
    pub train_words: usize,
    /// Test words per writer.
    #[arg(long, default_value_t = 10)]
    pub test_words: usize,
    #[arg(long, default_value_t = 5)]
    pub words_per_page: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: $FRAGNET_OUT_DIR or ./fragnet-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key=value` settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// fragnet or wordimgnet.
    #[arg(long)]
    pub arch: Option<String>,
    /// Fragment size: 16, 32 or 64.
    #[arg(long)]
    pub q: Option<usize>,
    /// Number of writers (default: inferred from the manifests).
    #[arg(long)]
    pub writers: Option<usize>,
    /// Training manifest.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation manifest, scored after every epoch.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Words per mini-batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Piecewise learning rate, e.g. `0:1e-4,10:5e-5`.
    #[arg(long)]
    pub lr_schedule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Save a checkpoint every N epochs (0: final only).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<String>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test manifest.
    #[arg(long)]
    pub test: PathBuf,
    /// Training manifest; builds the writer models in `nn` mode.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// word, page, nn or retrieval.
    #[arg(long, default_value = "word")]
    pub mode: String,
    /// euclidean or cosine (nn and retrieval).
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    /// Add a per-writer Top-1 table.
    #[arg(long)]
    pub per_writer: bool,
    /// Add a Top-1 table by word length (needs transcriptions).
    #[arg(long)]
    pub by_word_length: bool,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value = "f32")]
    pub precision: String,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Word image (PNG or PGM).
    #[arg(long)]
    pub image: PathBuf,
    /// Writer class to explain (default: the predicted writer).
    #[arg(long = "class")]
    pub class: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "f32")]
    pub precision: String,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[arg(long, default_value = "fragnet")]
    pub arch: String,
    #[arg(long, default_value_t = 64)]
    pub q: usize,
    #[arg(long, default_value_t = 10)]
    pub writers: usize,
}

/// `--out`, else `$FRAGNET_OUT_DIR`, else `./fragnet-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("FRAGNET_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fragnet-out"))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| FragError::Io {
            path: dir.to_path_buf(),
            source: e,
        })
        .context("creating output directory")
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| {
        FragError::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<FragError>()) {
        Some(
            FragError::Config(_) | FragError::Parse { .. } | FragError::SplitViolation { .. } | FragError::Unsupported(_),
        ) => 2,
        Some(FragError::Io { .. } | FragError::Image { .. }) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Heatmap(a) => commands::heatmap(a),
        Command::Flops(a) => commands::flops(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
