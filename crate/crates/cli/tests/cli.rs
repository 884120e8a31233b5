//! End-to-end tests of the binary's contract: flags, files, exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deblur_core::fixtures::text_like_image;
use deblur_core::psf::BlurKernel;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deblur-lab"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("deblur_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_sources(dir: &Path, n: u64, size: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        text_like_image(i, size, size, 3)
            .save_png(&dir.join(format!("src_{i}.png")))
            .unwrap();
    }
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn kernel_gen_writes_a_normalized_psf_and_spectrum() {
    let dir = workdir("kernel");
    let out = dir.join("k");
    run_ok(bin().args([
        "kernel", "gen", "--type", "linear", "--size", "13", "--angle", "30", "--length", "9",
        "--out",
    ]).arg(&out));
    let kernel = BlurKernel::read_psf(&out.join("kernel.psf")).unwrap();
    assert_eq!(kernel.size(), 13);
    assert!((kernel.sum() - 1.0).abs() <= 1e-9);
    assert!(out.join("kernel_spectrum.png").exists());
    assert!(out.join("kernel.png").exists());
    assert!(out.join("run_config.json").exists());
}

#[test]
fn kernel_gen_is_deterministic_under_seed() {
    let dir = workdir("kernel_det");
    for tag in ["a", "b"] {
        run_ok(bin().args([
            "kernel", "gen", "--type", "trajectory", "--size", "15", "--jitter", "0.7", "--seed",
            "42", "--out",
        ]).arg(dir.join(tag)));
    }
    let a = std::fs::read(dir.join("a/kernel.psf")).unwrap();
    let b = std::fs::read(dir.join("b/kernel.psf")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn kernel_inspect_round_trips_generated_files() {
    let dir = workdir("kernel_inspect");
    run_ok(bin().args(["kernel", "gen", "--type", "trajectory", "--seed", "9", "--out"]).arg(dir.join("g")));
    run_ok(
        bin()
            .args(["kernel", "inspect", "--psf"])
            .arg(dir.join("g/kernel.psf"))
            .args(["--out"])
            .arg(dir.join("i")),
    );
    assert!(dir.join("i/kernel_inspect_spectrum.png").exists());
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let unknown = bin().arg("definitely-not-a-command").output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));

    let bad_flag = bin().args(["kernel", "gen", "--wat"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(1));

    let bad_type = bin()
        .args(["kernel", "gen", "--type", "warp", "--out"])
        .arg(workdir("badtype"))
        .output()
        .unwrap();
    assert_eq!(bad_type.status.code(), Some(1));

    for sub in ["kernel", "blur", "stats", "train", "eval", "deblur", "gradcheck"] {
        let help = bin().args([sub, "--help"]).output().unwrap();
        assert_eq!(help.status.code(), Some(0), "{sub} --help");
        let text = String::from_utf8_lossy(&help.stdout).to_string();
        assert!(text.contains("--out") || text.contains("Usage"), "{sub} help lists flags");
    }
    // defaults are listed in help
    let blur_help = bin().args(["blur", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&blur_help.stdout).to_string();
    assert!(text.contains("13:31:2"));
}

#[test]
fn blur_builds_a_stepped_corpus_with_manifest() {
    let dir = workdir("blur");
    let sources = dir.join("srcs");
    write_sources(&sources, 3, 48);
    let out = dir.join("corpus");
    run_ok(
        bin()
            .args(["blur", "--sharp-dir"])
            .arg(&sources)
            .args(["--n", "9", "--sizes", "9:13:2", "--img-size", "40", "--seed", "5", "--out"])
            .arg(&out),
    );
    for sub in ["blurred", "sharp", "kernels"] {
        assert_eq!(std::fs::read_dir(out.join(sub)).unwrap().count(), 9, "{sub}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let rows = manifest.as_array().unwrap();
    assert_eq!(rows.len(), 9);
    // 9 samples over sizes {9, 11, 13} → size steps up every 3 samples
    let sizes: Vec<u64> = rows.iter().map(|r| r["kernel_size"].as_u64().unwrap()).collect();
    assert_eq!(sizes, vec![9, 9, 9, 11, 11, 11, 13, 13, 13]);
    // kernels on disk satisfy the sum-to-1 invariant
    let k = BlurKernel::read_psf(&out.join("kernels/img_00000.psf")).unwrap();
    assert!((k.sum() - 1.0).abs() <= 1e-9);
}

#[test]
fn blur_output_is_independent_of_job_count() {
    let dir = workdir("blur_jobs");
    let sources = dir.join("srcs");
    write_sources(&sources, 2, 32);
    for (tag, jobs) in [("j1", "1"), ("j4", "4")] {
        run_ok(
            bin()
                .args(["blur", "--sharp-dir"])
                .arg(&sources)
                .args(["--n", "6", "--sizes", "7:9:2", "--img-size", "32", "--seed", "3", "--jobs", jobs, "--out"])
                .arg(dir.join(tag)),
        );
    }
    for i in 0..6 {
        let a = std::fs::read(dir.join(format!("j1/blurred/img_{i:05}.png"))).unwrap();
        let b = std::fs::read(dir.join(format!("j4/blurred/img_{i:05}.png"))).unwrap();
        assert_eq!(a, b, "pair {i} differs across job counts");
    }
}

#[test]
fn stats_reports_measured_and_reference_bands() {
    let dir = workdir("stats");
    let sources = dir.join("srcs");
    write_sources(&sources, 2, 48);
    let corpus = dir.join("corpus");
    run_ok(
        bin()
            .args(["blur", "--sharp-dir"])
            .arg(&sources)
            .args(["--n", "4", "--sizes", "7:9:2", "--img-size", "48", "--seed", "2", "--out"])
            .arg(&corpus),
    );
    let out = dir.join("statsout");
    let run = run_ok(
        bin()
            .args(["stats", "--blurred-dir"])
            .arg(corpus.join("blurred"))
            .args(["--sharp-dir"])
            .arg(corpus.join("sharp"))
            .args(["--img-size", "48", "--out"])
            .arg(&out),
    );
    let stdout = String::from_utf8_lossy(&run.stdout).to_string();
    assert!(stdout.contains("PSNR"));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(record["measured"]["pairs"], 4);
    assert!((record["full_scale_reference"]["psnr_db"]["mean"].as_f64().unwrap() - 22.32).abs() < 1e-9);
    assert!((record["full_scale_reference"]["psnr_db"]["min"].as_f64().unwrap() - 10.08).abs() < 1e-9);
}

#[test]
fn deblur_with_identity_kernel_reproduces_the_input() {
    let dir = workdir("deblur_id");
    let input = dir.join("input.png");
    text_like_image(7, 40, 40, 3).save_png(&input).unwrap();
    let delta = BlurKernel::delta(3).unwrap();
    let psf = dir.join("delta.psf");
    delta.write_psf(&psf).unwrap();
    let out = dir.join("restored");
    run_ok(
        bin()
            .args(["deblur", "--input"])
            .arg(&input)
            .args(["--method", "inverse", "--kernel"])
            .arg(&psf)
            .args(["--epsilon", "0", "--out"])
            .arg(&out),
    );
    let restored = std::fs::read(out.join("input_restored.png")).unwrap();
    let original = std::fs::read(&input).unwrap();
    // identical pixels (PNG encoder settings may differ from the source file)
    let a = deblur_core::image::ImageTensor::load_png(&out.join("input_restored.png")).unwrap();
    let b = deblur_core::image::ImageTensor::load_png(&input).unwrap();
    assert_eq!(a.data(), b.data());
    assert!(!restored.is_empty() && !original.is_empty());
}

#[test]
fn deblur_requires_exactly_one_restoration_route() {
    let dir = workdir("deblur_conflict");
    let input = dir.join("input.png");
    text_like_image(7, 32, 32, 3).save_png(&input).unwrap();
    let missing = bin()
        .args(["deblur", "--input"])
        .arg(&input)
        .args(["--out"])
        .arg(dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn train_eval_deblur_round_trip_with_deterministic_outputs() {
    let dir = workdir("train");
    let sources = dir.join("srcs");
    write_sources(&sources, 3, 32);
    let corpus = dir.join("corpus");
    run_ok(
        bin()
            .args(["blur", "--sharp-dir"])
            .arg(&sources)
            .args(["--n", "6", "--sizes", "7:9:2", "--img-size", "32", "--seed", "4", "--out"])
            .arg(&corpus),
    );
    let run = dir.join("run");
    let output = run_ok(
        bin()
            .args(["train", "--blurred-dir"])
            .arg(corpus.join("blurred"))
            .args(["--sharp-dir"])
            .arg(corpus.join("sharp"))
            .args([
                "--preset", "reduced", "--split-counts", "4,1,1", "--epochs", "2", "--lr", "0.001",
                "--seed", "5", "--out",
            ])
            .arg(&run),
    );
    assert!(String::from_utf8_lossy(&output.stdout).contains("best val PSNR"));
    assert!(run.join("checkpoint_best.dbck").exists());
    assert!(run.join("history.jsonl").exists());
    assert!(run.join("resolved_train_config.json").exists());
    let history = std::fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);

    let eval_out = dir.join("eval");
    run_ok(
        bin()
            .args(["eval", "--checkpoint"])
            .arg(run.join("checkpoint_best.dbck"))
            .args(["--blurred-dir"])
            .arg(corpus.join("blurred"))
            .args(["--sharp-dir"])
            .arg(corpus.join("sharp"))
            .args(["--split-counts", "4,1,1", "--split", "test", "--seed", "5", "--csv", "--out"])
            .arg(&eval_out),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("eval_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["per_image"].as_array().unwrap().len(), 1);
    assert!((report["full_scale_reference"]["psnr_db"].as_f64().unwrap() - 32.20).abs() < 1e-9);
    assert!(eval_out.join("eval_report.csv").exists());

    // single-image restoration twice → bit-identical output files
    for tag in ["s1", "s2"] {
        run_ok(
            bin()
                .args(["deblur", "--input"])
                .arg(corpus.join("blurred/img_00000.png"))
                .args(["--checkpoint"])
                .arg(run.join("checkpoint_best.dbck"))
                .args(["--out"])
                .arg(dir.join(tag)),
        );
    }
    let a = std::fs::read(dir.join("s1/img_00000_restored.png")).unwrap();
    let b = std::fs::read(dir.join("s2/img_00000_restored.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_overrides_the_preset() {
    let dir = workdir("cfgfile");
    let sources = dir.join("srcs");
    write_sources(&sources, 2, 32);
    let corpus = dir.join("corpus");
    run_ok(
        bin()
            .args(["blur", "--sharp-dir"])
            .arg(&sources)
            .args(["--n", "4", "--sizes", "7:7:2", "--img-size", "32", "--seed", "1", "--out"])
            .arg(&corpus),
    );
    // full model/train objects mirroring the library config types
    let model = deblur_core::model::ModelConfig::reduced(0);
    let train = deblur_core::pipeline::TrainConfig {
        epochs_max: 1,
        lr: 5e-4,
        ..Default::default()
    };
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&serde_json::json!({ "model": model, "train": train }))
            .unwrap(),
    )
    .unwrap();
    let run = dir.join("run");
    run_ok(
        bin()
            .args(["train", "--blurred-dir"])
            .arg(corpus.join("blurred"))
            .args(["--sharp-dir"])
            .arg(corpus.join("sharp"))
            .args(["--split-counts", "2,1,1", "--seed", "2", "--config"])
            .arg(&config_path)
            .args(["--out"])
            .arg(&run),
    );
    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run.join("resolved_train_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["train"]["epochs_max"], 1);
    assert_eq!(resolved["train"]["lr"], 5e-4);
    assert_eq!(resolved["model"]["img_size"], serde_json::json!([32, 32]));
    let history = std::fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 1);
}

#[test]
fn gradcheck_passes_and_exits_zero() {
    let dir = workdir("gradcheck");
    let output = run_ok(
        bin()
            .args(["gradcheck", "--per-family", "2", "--seed", "3", "--out"])
            .arg(&dir),
    );
    let stdout = String::from_utf8_lossy(&output.stdout).to_string();
    assert!(stdout.contains("gradcheck: PASS"));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(record["pass"], true);
}

#[test]
fn seed_falls_back_to_the_environment_variable() {
    let dir = workdir("envseed");
    for tag in ["a", "b"] {
        let out = bin()
            .env("DEBLUR_LAB_SEED", "123")
            .args(["kernel", "gen", "--type", "trajectory", "--size", "9", "--out"])
            .arg(dir.join(tag))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.join("a/kernel.psf")).unwrap();
    let b = std::fs::read(dir.join("b/kernel.psf")).unwrap();
    assert_eq!(a, b);
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/run_config.json")).unwrap())
            .unwrap();
    assert_eq!(record["resolved_seed"], 123);
}
