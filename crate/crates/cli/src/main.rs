//! `mfmnet`: align, train, extract, verify, gradcheck, info.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure |
//! | 2 | malformed or invalid input, model or config |
//! | 3 | numeric divergence during training |
//! | 4 | missing input image (extract) |
//! | 5 | missing embedding (verify) |
//! | 6 | degenerate input (single-class pairs) |
//! | 7 | gradient check failure |
//! | 64 | command-line usage error |

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfmnet::Error;

#[derive(Parser)]
#[command(name = "mfmnet", version, about = "Max-Feature-Map face networks")]
struct Cli {
    /// Worker threads; 1 forces fully sequential execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw face images to 144x144 using five landmarks.
    Align(AlignArgs),
    /// Train a network on an aligned dataset.
    Train(Box<TrainArgs>),
    /// Write embedding-layer activations for a list of images.
    Extract(ExtractArgs),
    /// Score verification pairs: fold accuracy, ROC and EER.
    Verify(VerifyArgs),
    /// Compare every analytic gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Print layer shapes and parameter counts.
    Info(InfoArgs),
}

#[derive(Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 144)]
    pub size: usize,
    #[arg(long, default_value_t = 72.0)]
    pub anchor_x: f64,
    #[arg(long, default_value_t = 60.0)]
    pub anchor_y: f64,
    #[arg(long, default_value_t = 50.0)]
    pub eye_mouth: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Paper,
    Toy,
    Tiny,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Mfm,
    Relu,
}

impl From<ActivationArg> for mfmnet::Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Mfm => mfmnet::Activation::Mfm,
            ActivationArg::Relu => mfmnet::Activation::Relu,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Aligned dataset root, `<root>/<identity>/<image>.pgm`.
    #[arg(long)]
    pub data: PathBuf,
    /// Network config (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in network sized to the number of identities in the data.
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub activation: Option<ActivationArg>,
    /// Hyperparameters (TOML); individual flags override it.
    #[arg(long)]
    pub hp: Option<PathBuf>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Seeds initialization, the train/val split and every training draw.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_model: PathBuf,
    /// CSV log `iteration,lr,train_loss,val_accuracy`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint directory; defaults to `<out-model>.checkpoints`.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long)]
    pub init_model: Option<PathBuf>,
    #[arg(long)]
    pub stop_at_accuracy: Option<f64>,
    /// Element width of a fresh model; defaults to 32, or to that of `--init-model`.
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One image path per line; relative paths resolve against `--root`.
    #[arg(long)]
    pub input_list: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub root: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Directory receiving `folds.csv` and `roc.csv`.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    #[value(name = "32")]
    F32,
    #[value(name = "64")]
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FaultArg {
    Mfm,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Network for the end-to-end checks (TOML); defaults to a tiny stack.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "64")]
    pub precision: Precision,
    /// Corrupt a backward pass to confirm the check catches it.
    #[arg(long)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Args)]
pub struct InfoArgs {
    #[arg(long, required_unless_present = "preset")]
    pub model: Option<PathBuf>,
    #[arg(long, conflicts_with = "model")]
    pub preset: Option<Preset>,
    #[arg(long, default_value_t = 10575)]
    pub num_classes: usize,
    #[arg(long, value_enum, default_value = "mfm")]
    pub activation: ActivationArg,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_MISSING_IMAGE: u8 = 4;
pub const EXIT_MISSING_EMBEDDING: u8 = 5;
pub const EXIT_DEGENERATE: u8 = 6;
pub const EXIT_GRADCHECK: u8 = 7;
pub const EXIT_USAGE: u8 = 64;

/// Failure carrying its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::NumericDivergence { .. } => EXIT_DIVERGENCE,
            Error::MissingEmbedding(_) => EXIT_MISSING_EMBEDDING,
            Error::DegenerateInput(_) => EXIT_DEGENERATE,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Align(a) => commands::align(a),
        Command::Train(a) => commands::train(*a),
        Command::Extract(a) => commands::extract(a),
        Command::Verify(a) => commands::verify(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Info(a) => commands::info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
