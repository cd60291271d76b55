//! `hdrsource` — HDR provenance toolkit command line.
//!
//! Subcommands cover the full experiment pipeline: corpus creation (`synth`,
//! `fuse`), dataset assembly (`build`), the CNN arm (`train`, `eval`), the
//! hand-crafted-feature arm (`features`, `svm`), and result merging
//! (`report`). Every parameter can come from a flag or a `key = value`
//! config file (flags win), the resolved values are written next to each
//! command's outputs, and all randomness is governed by mandatory `--seed`
//! flags, so every artifact is reproducible byte-for-byte.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod exit;

#[derive(Parser)]
#[command(name = "hdrsource", version, about = "HDR provenance toolkit: classify HDR images as merged (mHDR) or expanded (iHDR)")]
struct Cli {
    /// Upper bound on worker threads. Reserved: the current pipelines run
    /// single-threaded for exact reproducibility.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand LDR images into iHDR surrogates with one inverse tone mapping operator
    Synth(SynthArgs),
    /// Fuse bracketed LDR exposure stacks into mHDR radiance maps
    Fuse(FuseArgs),
    /// Build a block dataset (splits, manifest, normalization) from two class directories
    Build(BuildArgs),
    /// Train a block classifier on a built dataset
    Train(TrainArgs),
    /// Evaluate a trained model (CNN checkpoint or SVM) on one dataset split
    Eval(EvalArgs),
    /// Extract HOG/LBP/SPAM descriptors from a dataset split
    Features(FeaturesArgs),
    /// Grid-search and train a linear SVM on extracted descriptors
    Svm(SvmArgs),
    /// Merge several eval outputs into one comparison table
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of input .ppm images
    #[arg(long)]
    pub ldr_dir: Option<PathBuf>,
    /// Output directory for .hdr files and the operator tag file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Operator: linear, sigmoid, expand_map, or dual_region
    #[arg(long)]
    pub operator: Option<String>,
    /// Decoding exponent applied to code values
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Peak output luminance (relative units)
    #[arg(long)]
    pub l_max: Option<f64>,
    /// Normalized luminance above which a pixel counts as highlight
    #[arg(long)]
    pub highlight_threshold: Option<f64>,
    /// Highlight gain (shadow divisor for dual_region)
    #[arg(long)]
    pub boost: Option<f64>,
    /// Sigmoid knee shape
    #[arg(long)]
    pub sigma_s: Option<f64>,
}

#[derive(Args)]
pub struct FuseArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Stack list: one `name<TAB>time:path<TAB>time:path...` line per stack,
    /// paths relative to this file
    #[arg(long)]
    pub stacks: Option<PathBuf>,
    /// Output directory for fused .hdr files
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Linearization exponent for the 8-bit codes
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args)]
pub struct BuildArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of mHDR .hdr images (optionally with tags.tsv)
    #[arg(long)]
    pub mhdr_dir: Option<PathBuf>,
    /// Directory of iHDR .hdr images (optionally with tags.tsv)
    #[arg(long)]
    pub ihdr_dir: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Split/sampling seed (required; no wall-clock default)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Verification-1 images held out per class
    #[arg(long)]
    pub verify_images: Option<usize>,
    /// Total training blocks sampled (split evenly between classes)
    #[arg(long)]
    pub train_blocks: Option<usize>,
    /// Downscale images whose longer side exceeds this
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Input conditioning: log_ln or pixel_minmax
    #[arg(long)]
    pub conditioning: Option<String>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory produced by `build`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoints, state, and history
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Architecture: plain or residual
    #[arg(long)]
    pub arch: Option<String>,
    /// Shuffle/init/dropout seed (required; no wall-clock default)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total epochs (a resumed run continues up to this)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dropout probability for the dense head
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Evaluate the verification split every this many epochs
    #[arg(long)]
    pub metrics_every: Option<usize>,
    /// Stop early once an epoch's training accuracy reaches this
    #[arg(long)]
    pub stop_at_train_acc: Option<f64>,
    /// Continue from this directory's last.ckpt and state.train
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory produced by `build`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file: a .ckpt checkpoint or an svm.model
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Split to score: train, verify1, or verify2
    #[arg(long)]
    pub split: Option<String>,
    /// Output directory for the report, ROC, and vote files
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FeaturesArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory produced by `build`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for .feat files
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Split to extract from: train, verify1, or verify2
    #[arg(long)]
    pub split: Option<String>,
    /// Descriptor: hog, lbp, spam, or all
    #[arg(long)]
    pub kind: Option<String>,
}

#[derive(Args)]
pub struct SvmArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feature file produced by `features`
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output directory for svm.model and svm.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fold-shuffle and Pegasos sampling seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated C grid (default 0.01,0.1,1,10,100)
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Optional key = value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for comparison.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Eval output directories to merge
    #[arg(value_name = "EVAL_DIR")]
    pub eval_dirs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads < 1 {
        eprintln!("error: --threads must be >= 1");
        return ExitCode::from(1);
    }

    let result = match &cli.command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Fuse(a) => commands::fuse::run(a),
        Command::Build(a) => commands::build::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Features(a) => commands::features::run(a),
        Command::Svm(a) => commands::svm::run(a),
        Command::Report(a) => commands::report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
