use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "hat", version, about = "Hybrid attention transformer for image restoration")]
pub struct Cli {
    /// Arithmetic precision of model evaluation and training.
    #[arg(long, value_enum, default_value_t = Precision::F32, global = true)]
    pub precision: Precision,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, env = "HAT_THREADS", global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on an LQ/HQ pair manifest.
    Train(TrainArgs),
    /// Restore a PNG image or every PNG in a directory.
    Sr(SrArgs),
    /// Local attribution map of an output patch.
    Lam(LamArgs),
    /// Parameter count and multiply-accumulates of a configuration.
    Complexity(ComplexityArgs),
    /// Build degraded inputs and a pair manifest from a folder of clean PNGs.
    Degrade(DegradeArgs),
    /// Save the named intermediate features of one forward pass.
    DumpFeatures(FeatureArgs),
    /// List presets, degradations, detectors and restorers.
    List,
}

/// Where the model configuration comes from.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Named configuration (see `hat list`).
    #[arg(long)]
    pub preset: Option<String>,

    /// Text file of key=value lines applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Single override, e.g. `--set alpha=0.01`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// A model given by checkpoint, or built from a configuration and a seed.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Checkpoint to load; configuration flags are then rejected.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    #[command(flatten)]
    pub config: ConfigArgs,

    /// Initialization seed when no checkpoint is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Training pair manifest.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Validation pair manifest.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,

    /// scratch, pretrain or finetune [default: scratch].
    #[arg(long)]
    pub phase: Option<String>,

    /// Total optimizer steps of the run [default: 1000].
    #[arg(long)]
    pub steps: Option<u64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory for `train.log` and `last.ck`.
    #[arg(long)]
    pub out: PathBuf,

    /// Pre-trained checkpoint to fine-tune (required for `--phase finetune`).
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Continue the run saved in this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Patches per step [default: 4].
    #[arg(long)]
    pub batch: Option<usize>,

    /// LQ patch side [default: 64].
    #[arg(long)]
    pub patch: Option<usize>,

    /// Initial learning rate instead of the phase default.
    #[arg(long)]
    pub lr: Option<f64>,

    /// Validation interval in steps [default: off].
    #[arg(long)]
    pub val_every: Option<u64>,

    /// Checkpoint interval in steps [default: end of run only].
    #[arg(long)]
    pub checkpoint_every: Option<u64>,

    /// Disable rotation/flip augmentation.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Args, Debug)]
pub struct SrArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// PNG file or directory of PNGs.
    #[arg(long)]
    pub input: PathBuf,

    /// Output PNG file, or directory when the input is a directory.
    #[arg(long)]
    pub output: PathBuf,

    /// Ground truth (file or directory) for PSNR/SSIM on luma.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LamArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Restorer kind: hat, conv or identity.
    #[arg(long, default_value = "hat")]
    pub restorer: String,

    /// Detector: gradient or sum.
    #[arg(long, default_value = "gradient")]
    pub detector: String,

    #[arg(long)]
    pub input: PathBuf,

    /// Patch column in output coordinates.
    #[arg(long)]
    pub x: usize,

    /// Patch row in output coordinates.
    #[arg(long)]
    pub y: usize,

    /// Patch side in output pixels.
    #[arg(long, default_value_t = 16)]
    pub l: usize,

    /// Blur width of the path baseline, in pixels.
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,

    #[arg(long, default_value_t = 100)]
    pub steps: usize,

    /// Output directory for heatmap.png, map.bin and lam.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ComplexityArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Input extent as HxW.
    #[arg(long, default_value = "64x64")]
    pub hw: String,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Folder of clean PNG images.
    #[arg(long)]
    pub input: PathBuf,

    /// Output folder; receives lq/, hq/ and pairs.txt.
    #[arg(long)]
    pub output: PathBuf,

    /// Degradation: bicubic or noise.
    #[arg(long, default_value = "bicubic")]
    pub kind: String,

    /// Downscale factor for bicubic.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,

    /// Noise level on the 0-255 scale.
    #[arg(long, default_value_t = 25.0)]
    pub sigma: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct FeatureArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long)]
    pub input: PathBuf,

    /// Output container of named feature tensors.
    #[arg(long)]
    pub output: PathBuf,
}
