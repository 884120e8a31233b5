//! Subcommand implementations.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use rand_like::SeedStream;
use serde::Deserialize;
use serde_json::json;

use deblur_core::classical::DeconvParams;
use deblur_core::gradcheck;
use deblur_core::image::ImageTensor;
use deblur_core::model::ModelConfig;
use deblur_core::pipeline::{
    self, evaluate, ingest, severity_stats, Checkpoint, SeverityReference, Split, SplitSpec,
    TrainConfig,
};
use deblur_core::psf::{
    apply_blur, generate_linear_kernel, generate_trajectory_kernel, kernel_spectrum, BlurKernel,
    Boundary, DegradationConfig,
};

use crate::args::*;

/// Marker for exit code 1 (usage) versus 2 (runtime).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Tiny deterministic stream for corpus parameter draws; avoids pulling the
/// full rand crate into the CLI.
mod rand_like {
    pub struct SeedStream(u64);

    impl SeedStream {
        pub fn new(seed: u64) -> Self {
            Self(seed.wrapping_add(0x9E3779B97F4A7C15))
        }

        pub fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = self.0 ^ (self.0 >> 31);
            (x >> 11) as f64 / (1u64 << 53) as f64
        }

        pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
            lo + (hi - lo) * self.next_f64()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = resolve_seed(&cli)?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    echo_config(&cli, seed)?;
    match &cli.command {
        Command::Kernel { action } => match action {
            KernelAction::Gen(args) => kernel_gen(&cli, args, seed),
            KernelAction::Inspect(args) => kernel_inspect(&cli, args),
        },
        Command::Blur(args) => blur(&cli, args, seed),
        Command::Stats(args) => stats(&cli, args),
        Command::Train(args) => train(&cli, args, seed),
        Command::Eval(args) => eval(&cli, args, seed),
        Command::Deblur(args) => deblur(&cli, args),
        Command::Gradcheck(args) => gradcheck_cmd(&cli, args, seed),
    }
}

fn resolve_seed(cli: &Cli) -> Result<u64> {
    if let Some(seed) = cli.seed {
        return Ok(seed);
    }
    match std::env::var("DEBLUR_LAB_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| usage(format!("DEBLUR_LAB_SEED='{raw}' is not a u64"))),
        Err(_) => Ok(0),
    }
}

/// Reproducibility record: the fully resolved invocation.
fn echo_config(cli: &Cli, seed: u64) -> Result<()> {
    let record = json!({
        "invocation": cli,
        "resolved_seed": seed,
        "out": cli.out,
    });
    let path = cli.out.join("run_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&record)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn say(cli: &Cli, msg: impl AsRef<str>) {
    if cli.verbose {
        eprintln!("[deblur-lab] {}", msg.as_ref());
    }
}

// ---------------------------------------------------------------------------
// kernel
// ---------------------------------------------------------------------------

fn build_kernel(kind: &str, args: &KernelGenArgs, seed: u64) -> Result<BlurKernel> {
    match kind {
        "linear" => Ok(generate_linear_kernel(args.size, args.angle, args.length, seed)?),
        "trajectory" => Ok(generate_trajectory_kernel(args.size, seed, args.jitter)?),
        other => Err(usage(format!(
            "unknown kernel type '{other}' (expected linear or trajectory)"
        ))),
    }
}

fn write_kernel_products(
    cli: &Cli,
    kernel: &BlurKernel,
    stem: &str,
    spectrum_size: usize,
    log_scaled: bool,
) -> Result<()> {
    let psf_path = cli.out.join(format!("{stem}.psf"));
    kernel.write_psf(&psf_path)?;
    let spectrum = kernel_spectrum(kernel, (spectrum_size, spectrum_size), log_scaled)?;
    spectrum.save_png(&cli.out.join(format!("{stem}_spectrum.png")))?;
    // kernel rendered with its peak normalized to white
    let max = kernel.values().iter().cloned().fold(f64::MIN, f64::max);
    let viz: Vec<f64> = kernel.values().iter().map(|v| v / max).collect();
    ImageTensor::new(kernel.size(), kernel.size(), 1, viz)?
        .save_png(&cli.out.join(format!("{stem}.png")))?;
    println!(
        "kernel {stem}: size {}, sum {:.12}, dc magnitude {:.9}",
        kernel.size(),
        kernel.sum(),
        spectrum.dc_magnitude()
    );
    Ok(())
}

fn kernel_gen(cli: &Cli, args: &KernelGenArgs, seed: u64) -> Result<()> {
    let kernel = build_kernel(&args.kind, args, seed)?;
    write_kernel_products(cli, &kernel, &args.name, args.spectrum_size, !args.linear_spectrum)
}

fn kernel_inspect(cli: &Cli, args: &KernelInspectArgs) -> Result<()> {
    let kernel = BlurKernel::read_psf(&args.psf)?;
    let stem = args
        .psf
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("kernel")
        .to_string();
    write_kernel_products(
        cli,
        &kernel,
        &format!("{stem}_inspect"),
        args.spectrum_size,
        !args.linear_spectrum,
    )
}

// ---------------------------------------------------------------------------
// blur (corpus synthesis)
// ---------------------------------------------------------------------------

fn parse_sizes(spec: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(usage(format!("--sizes '{spec}' must be start:stop:step")));
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--sizes '{spec}' has non-integer fields")))?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || start > stop {
        return Err(usage(format!("--sizes '{spec}' must be ascending with step > 0")));
    }
    let sizes: Vec<usize> = (start..=stop).step_by(step).collect();
    if sizes.iter().any(|s| s % 2 == 0) {
        return Err(usage(format!("--sizes '{spec}' contains even kernel sizes")));
    }
    Ok(sizes)
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn blur(cli: &Cli, args: &BlurArgs, seed: u64) -> Result<()> {
    let sharp_files = list_pngs(&args.sharp_dir)?;
    if sharp_files.is_empty() {
        return Err(usage(format!("no PNG files in {}", args.sharp_dir.display())));
    }
    if args.n == 0 {
        return Err(usage("--n must be >= 1".to_string()));
    }
    let sizes = parse_sizes(&args.sizes)?;
    let boundary = match args.boundary.as_str() {
        "circular" => Boundary::Circular,
        "reflect" => Boundary::Reflect,
        other => return Err(usage(format!("unknown boundary '{other}'"))),
    };
    if !matches!(args.kind.as_str(), "linear" | "trajectory" | "mixed") {
        return Err(usage(format!("unknown kernel kind '{}'", args.kind)));
    }
    for sub in ["sharp", "blurred", "kernels"] {
        std::fs::create_dir_all(cli.out.join(sub))?;
    }
    // size steps up every ceil(n / #sizes) samples
    let block = args.n.div_ceil(sizes.len());

    let manifest: Mutex<Vec<serde_json::Value>> = Mutex::new(Vec::with_capacity(args.n));
    let jobs = args.jobs.max(1).min(args.n);
    let next_index = std::sync::atomic::AtomicUsize::new(0);
    let worker = |_: usize| -> Result<()> {
        loop {
            let i = next_index.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            if i >= args.n {
                return Ok(());
            }
            // per-image seed, as documented: base seed XOR image index
            let pair_seed = seed ^ i as u64;
            let size = sizes[(i / block).min(sizes.len() - 1)];
            let kind = match args.kind.as_str() {
                "mixed" => {
                    if i % 2 == 0 {
                        "trajectory"
                    } else {
                        "linear"
                    }
                }
                k => k,
            };
            let kernel = match kind {
                "linear" => {
                    let mut draw = SeedStream::new(pair_seed);
                    let angle = draw.range(0.0, 180.0);
                    let length = draw.range(0.45, 0.95) * (size as f64 - 1.0) + 1.0;
                    generate_linear_kernel(size, angle, length.clamp(1.0, size as f64), pair_seed)?
                }
                _ => generate_trajectory_kernel(size, pair_seed, args.jitter)?,
            };
            let source = &sharp_files[i % sharp_files.len()];
            let sharp = ImageTensor::load_png(source)?
                .resize_bilinear(args.img_size, args.img_size)?;
            let config = DegradationConfig {
                kernel: kernel.clone(),
                noise_sigma: args.noise_sigma,
                boundary,
                rng_seed: pair_seed ^ 0x4E015E,
            };
            let blurred = apply_blur(&sharp, &config)?;
            let id = format!("img_{i:05}");
            sharp.save_png(&cli.out.join("sharp").join(format!("{id}.png")))?;
            blurred.save_png(&cli.out.join("blurred").join(format!("{id}.png")))?;
            kernel.write_psf(&cli.out.join("kernels").join(format!("{id}.psf")))?;
            manifest.lock().unwrap().push(json!({
                "index": i,
                "id": id,
                "source": source,
                "kernel_size": size,
                "kernel_kind": kind,
                "seed": pair_seed,
            }));
        }
    };
    if jobs == 1 {
        worker(0)?;
    } else {
        std::thread::scope(|scope| -> Result<()> {
            let handles: Vec<_> = (0..jobs).map(|w| scope.spawn(move || worker(w))).collect();
            for handle in handles {
                handle.join().expect("corpus worker panicked")?;
            }
            Ok(())
        })?;
    }
    let mut rows = manifest.into_inner().unwrap();
    rows.sort_by_key(|r| r["index"].as_u64());
    std::fs::write(
        cli.out.join("manifest.json"),
        serde_json::to_string_pretty(&rows)?,
    )?;
    say(cli, format!("synthesized {} pairs into {}", args.n, cli.out.display()));
    println!(
        "corpus: {} pairs, kernel sizes {:?}, kind {}, noise sigma {}",
        args.n, sizes, args.kind, args.noise_sigma
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

fn stats(cli: &Cli, args: &StatsArgs) -> Result<()> {
    let dataset = ingest(&args.blurred_dir, &args.sharp_dir, (args.img_size, args.img_size))?;
    for warning in &dataset.warnings {
        eprintln!("warning: {warning}");
    }
    let stats = severity_stats(&dataset)?;
    let reference = SeverityReference::default();
    let record = json!({
        "measured": stats,
        "full_scale_reference": reference,
    });
    std::fs::write(
        cli.out.join("stats.json"),
        serde_json::to_string_pretty(&record)?,
    )?;
    println!(
        "severity over {} pairs: PSNR min {:.2} dB / mean {:.2} dB (reference {:.2} / {:.2}), \
         SSIM min {:.4} / mean {:.4} (reference {:.4} / {:.2})",
        stats.pairs,
        stats.psnr_db.min,
        stats.psnr_db.mean,
        reference.psnr_db.min,
        reference.psnr_db.mean,
        stats.ssim.min,
        stats.ssim.mean,
        reference.ssim.min,
        reference.ssim.mean,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn load_file_config(cli: &Cli) -> Result<FileConfig> {
    match &cli.config {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        }
    }
}

fn parse_triplet<T: std::str::FromStr + Copy>(raw: &str, what: &str) -> Result<(T, T, T)> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err(usage(format!("{what} '{raw}' must have exactly 3 comma-separated values")));
    }
    let vals: Vec<T> = parts
        .iter()
        .map(|p| p.trim().parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("{what} '{raw}' has unparseable fields")))?;
    Ok((vals[0], vals[1], vals[2]))
}

fn split_spec(fractions: &str, counts: &Option<String>) -> Result<SplitSpec> {
    match counts {
        Some(raw) => {
            let (tr, va, te) = parse_triplet::<usize>(raw, "--split-counts")?;
            Ok(SplitSpec::Counts(tr, va, te))
        }
        None => {
            let (tr, va, te) = parse_triplet::<f64>(fractions, "--split-fractions")?;
            Ok(SplitSpec::Fractions(tr, va, te))
        }
    }
}

fn model_for_preset(preset: &str, seed: u64) -> Result<ModelConfig> {
    let mut config = match preset {
        "full" => ModelConfig::default(),
        "toy" => ModelConfig::toy(seed),
        "reduced" => ModelConfig::reduced(seed),
        other => return Err(usage(format!("unknown preset '{other}'"))),
    };
    config.seed = seed;
    Ok(config)
}

fn train(cli: &Cli, args: &TrainArgs, seed: u64) -> Result<()> {
    let file_config = load_file_config(cli)?;
    let mut model_config = match file_config.model {
        Some(m) => m,
        None => model_for_preset(&args.preset, seed)?,
    };
    model_config.seed = seed;
    let mut train_config = file_config.train.unwrap_or_default();
    train_config.seed = seed;
    if let Some(epochs) = args.epochs {
        train_config.epochs_max = epochs;
    }
    if let Some(lr) = args.lr {
        train_config.lr = lr;
    }

    let (h, w) = model_config.img_size;
    let mut dataset = ingest(&args.blurred_dir, &args.sharp_dir, (h, w))?;
    for warning in &dataset.warnings {
        eprintln!("warning: {warning}");
    }
    pipeline::split(&mut dataset, split_spec(&args.split_fractions, &args.split_counts)?, seed)?;

    let resolved = json!({ "model": model_config, "train": train_config });
    std::fs::write(
        cli.out.join("resolved_train_config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;

    say(cli, format!("training on {} pairs", dataset.len()));
    let outcome = pipeline::train(&dataset, &model_config, &train_config, &cli.out)?;
    println!(
        "training: {} epochs, best val PSNR {:.3} dB at epoch {}{}",
        outcome.epochs_run,
        outcome.best.best_val_psnr,
        outcome.best.epoch,
        if outcome.stopped_early { " (early stop)" } else { "" }
    );
    println!("checkpoint: {}", cli.out.join("checkpoint_best.dbck").display());
    Ok(())
}

fn parse_split(raw: &str) -> Result<Split> {
    match raw {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(usage(format!("unknown split '{other}'"))),
    }
}

fn eval(cli: &Cli, args: &EvalArgs, seed: u64) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (h, w) = checkpoint.model_config.img_size;
    let mut dataset = ingest(&args.blurred_dir, &args.sharp_dir, (h, w))?;
    pipeline::split(&mut dataset, split_spec(&args.split_fractions, &args.split_counts)?, seed)?;
    let params = checkpoint.to_model()?;
    let report = evaluate(&dataset, parse_split(&args.split)?, &params)?;
    std::fs::write(
        cli.out.join("eval_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    if args.csv {
        let mut csv = String::from("id,psnr_db,ssim\n");
        for row in &report.per_image {
            csv.push_str(&format!("{},{},{}\n", row.id, row.psnr_db, row.ssim));
        }
        std::fs::write(cli.out.join("eval_report.csv"), csv)?;
    }
    println!(
        "eval[{}]: {} images, mean PSNR {:.3} dB, mean SSIM {:.4} \
         (full-scale reference {:.2} dB / {:.4}), mean inference {:.1} ms, {} params",
        args.split,
        report.per_image.len(),
        report.aggregates.mean_psnr_db,
        report.aggregates.mean_ssim,
        report.full_scale_reference.psnr_db,
        report.full_scale_reference.ssim,
        report.timing.mean_inference_ms,
        report.param_count,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// deblur
// ---------------------------------------------------------------------------

fn parse_resize(raw: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = raw.split('x').collect();
    if parts.len() != 2 {
        return Err(usage(format!("--resize '{raw}' must look like 256x256")));
    }
    let h = parts[0].parse().map_err(|_| usage(format!("bad height in '{raw}'")))?;
    let w = parts[1].parse().map_err(|_| usage(format!("bad width in '{raw}'")))?;
    Ok((h, w))
}

fn deblur(cli: &Cli, args: &DeblurArgs) -> Result<()> {
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| usage(format!("input {} has no file stem", args.input.display())))?;
    let output = cli.out.join(format!("{stem}_restored.png"));
    match (&args.checkpoint, &args.method) {
        (Some(ckpt_path), None) => {
            let checkpoint = Checkpoint::load(ckpt_path)?;
            pipeline::deblur_single_model(&args.input, &checkpoint, &output)?;
        }
        (None, Some(method)) => {
            let kernel_path = args
                .kernel
                .as_ref()
                .ok_or_else(|| usage("--method needs --kernel <psf file>".to_string()))?;
            let kernel = BlurKernel::read_psf(kernel_path)?;
            let params = DeconvParams {
                epsilon: args.epsilon,
                nsr: args.nsr,
                iterations: args.iterations,
                tau: args.tau,
                lambda: args.lambda,
                step: args.step,
            };
            let resize = args.resize.as_deref().map(parse_resize).transpose()?;
            pipeline::deblur_single_classical(&args.input, method, &kernel, params, &output, resize)?;
        }
        _ => {
            return Err(usage(
                "deblur needs exactly one of --checkpoint or --method/--kernel".to_string(),
            ))
        }
    }
    println!("restored image written to {}", output.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

fn gradcheck_cmd(cli: &Cli, args: &GradcheckArgs, seed: u64) -> Result<()> {
    let started = std::time::Instant::now();
    let reports = gradcheck::op_suite();
    for report in &reports {
        println!(
            "{:34} max rel err {:>10.3e}  ({} checks)",
            report.name, report.max_rel_err, report.checks
        );
    }
    let ops_worst = gradcheck::worst(&reports);
    let mut rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| json!({ "name": r.name, "max_rel_err": r.max_rel_err, "checks": r.checks }))
        .collect();

    let mut end_to_end_err = None;
    if !args.ops_only {
        let report = gradcheck::end_to_end(seed, args.per_family)?;
        println!(
            "{:34} max rel err {:>10.3e}  ({} checks)",
            report.name, report.max_rel_err, report.checks
        );
        rows.push(json!({
            "name": report.name,
            "max_rel_err": report.max_rel_err,
            "checks": report.checks,
        }));
        end_to_end_err = Some(report.max_rel_err);
    }

    let ops_ok = ops_worst <= gradcheck::OP_TOLERANCE;
    let e2e_ok = end_to_end_err.is_none_or(|e| e <= gradcheck::END_TO_END_TOLERANCE);
    let record = json!({
        "reports": rows,
        "ops_worst": ops_worst,
        "ops_tolerance": gradcheck::OP_TOLERANCE,
        "end_to_end": end_to_end_err,
        "end_to_end_tolerance": gradcheck::END_TO_END_TOLERANCE,
        "elapsed_s": started.elapsed().as_secs_f64(),
        "pass": ops_ok && e2e_ok,
    });
    std::fs::write(
        cli.out.join("gradcheck.json"),
        serde_json::to_string_pretty(&record)?,
    )?;
    println!(
        "gradcheck: ops worst {ops_worst:.3e} (tolerance {:.0e}){} in {:.1}s",
        gradcheck::OP_TOLERANCE,
        match end_to_end_err {
            Some(e) => format!(
                ", end-to-end {e:.3e} (tolerance {:.0e})",
                gradcheck::END_TO_END_TOLERANCE
            ),
            None => String::new(),
        },
        started.elapsed().as_secs_f64()
    );
    if !(ops_ok && e2e_ok) {
        bail!("gradient check exceeded tolerance");
    }
    println!("gradcheck: PASS");
    Ok(())
}
