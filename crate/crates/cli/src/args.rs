//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "deblur-lab",
    version,
    about = "Motion-deblurring laboratory: PSF kernels, paired corpora, classical deconvolution, and a CNN-ViT restorer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Base RNG seed (falls back to $DEBLUR_LAB_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON file with `model` and/or `train` sections overriding defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; every artifact of the run lands here.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Chatty progress logging.
    #[arg(long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate or inspect PSF kernel files and their spectra.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Synthesize a paired blurred/sharp corpus from a sharp-image directory.
    Blur(BlurArgs),
    /// Blur-severity statistics (PSNR/SSIM) of a paired corpus.
    Stats(StatsArgs),
    /// Train the CNN-ViT restorer on a paired corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Restore a single image with a checkpoint or a classical method.
    Deblur(DeblurArgs),
    /// Verify every gradient against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Subcommand, Serialize)]
pub enum KernelAction {
    /// Generate a kernel, write `<name>.psf` plus spectrum/kernel PNGs.
    Gen(KernelGenArgs),
    /// Validate an existing PSF file and render its spectrum.
    Inspect(KernelInspectArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct KernelGenArgs {
    /// Generator: "linear" or "trajectory".
    #[arg(long = "type", value_name = "KIND", default_value = "linear")]
    pub kind: String,
    /// Odd kernel edge in pixels.
    #[arg(long, default_value_t = 13)]
    pub size: usize,
    /// Streak angle in degrees (linear generator).
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    /// Streak length in pixels (linear generator).
    #[arg(long, default_value_t = 9.0)]
    pub length: f64,
    /// Wander strength of the trajectory generator.
    #[arg(long, default_value_t = 0.6)]
    pub jitter: f64,
    /// Edge of the square spectrum image.
    #[arg(long, default_value_t = 256)]
    pub spectrum_size: usize,
    /// Store raw |H| instead of log(1+|H|).
    #[arg(long)]
    pub linear_spectrum: bool,
    /// Output file stem.
    #[arg(long, default_value = "kernel")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct KernelInspectArgs {
    /// PSF file to read.
    #[arg(long)]
    pub psf: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub spectrum_size: usize,
    #[arg(long)]
    pub linear_spectrum: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct BlurArgs {
    /// Directory of sharp PNG images (cycled if fewer than --n).
    #[arg(long)]
    pub sharp_dir: PathBuf,
    /// Number of pairs to synthesize.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Kernel sizes as start:stop:step (inclusive, odd).
    #[arg(long, default_value = "13:31:2")]
    pub sizes: String,
    /// Kernel generator: "linear", "trajectory", or "mixed".
    #[arg(long, default_value = "trajectory")]
    pub kind: String,
    #[arg(long, default_value_t = 0.6)]
    pub jitter: f64,
    /// Additive Gaussian noise std-dev in unit intensity scale.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Boundary handling: "circular" or "reflect".
    #[arg(long, default_value = "circular")]
    pub boundary: String,
    /// Square edge the images are resized to.
    #[arg(long, default_value_t = 256)]
    pub img_size: usize,
    /// Worker threads for synthesis (output is identical for any value).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub blurred_dir: PathBuf,
    #[arg(long)]
    pub sharp_dir: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub img_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub blurred_dir: PathBuf,
    #[arg(long)]
    pub sharp_dir: PathBuf,
    /// Architecture preset: "full" (256px), "toy" (64px), or "reduced" (32px).
    #[arg(long, default_value = "full")]
    pub preset: String,
    /// train,val,test fractions summing to 1.
    #[arg(long, default_value = "0.7,0.2,0.1", conflicts_with = "split_counts")]
    pub split_fractions: String,
    /// train,val,test counts summing to the dataset size (e.g. 5000,500,500).
    #[arg(long)]
    pub split_counts: Option<String>,
    /// Override the epoch limit.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override the initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub blurred_dir: PathBuf,
    #[arg(long)]
    pub sharp_dir: PathBuf,
    /// Which split to score: "train", "val", or "test".
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value = "0.7,0.2,0.1", conflicts_with = "split_counts")]
    pub split_fractions: String,
    #[arg(long)]
    pub split_counts: Option<String>,
    /// Also write the per-image table as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DeblurArgs {
    /// Input PNG to restore.
    #[arg(long)]
    pub input: PathBuf,
    /// Trained checkpoint (model path).
    #[arg(long, conflicts_with_all = ["method", "kernel"])]
    pub checkpoint: Option<PathBuf>,
    /// Classical method name (see `classical` registry): inverse, wiener,
    /// richardson_lucy, landweber, tv.
    #[arg(long, requires = "kernel")]
    pub method: Option<String>,
    /// PSF file describing the blur (classical path).
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Resize the input to HxW before restoring (e.g. 256x256).
    #[arg(long)]
    pub resize: Option<String>,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub nsr: f64,
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Skip the slower end-to-end model check.
    #[arg(long)]
    pub ops_only: bool,
    /// Parameters probed per layer family in the end-to-end check.
    #[arg(long, default_value_t = 5)]
    pub per_family: usize,
}
