//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them).

use std::path::PathBuf;
use std::time::Instant;

use deblur_core::classical::{
    landweber_trace, richardson_lucy_trace, tv_trace, DeconvRequest, InverseFilter, WienerFilter,
    DeconvMethod,
};
use deblur_core::fixtures::{positive_text_like_image, text_like_image};
use deblur_core::gradcheck;
use deblur_core::image::ImageTensor;
use deblur_core::metrics::{self, psnr_from_mse, PSNR_CAP_DB};
use deblur_core::model::{
    build_model, count_receptive_tokens, forward, Mode, ModelConfig,
};
use deblur_core::pipeline::{
    evaluate, ingest, severity_stats, train, Checkpoint, FullScaleReference, PairRecord,
    PairedDataset, SeverityReference, Split, SplitSpec, TrainConfig,
};
use deblur_core::psf::{
    apply_blur, generate_linear_kernel, generate_trajectory_kernel, kernel_spectrum, BlurKernel,
    DegradationConfig, KernelKind, KernelMeta,
};

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn suite_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("deblur_accept_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Kernel whose transfer function stays well away from zero on any grid.
fn zero_free_kernel() -> BlurKernel {
    let mut values = vec![0.05; 9];
    values[4] = 0.6;
    BlurKernel::from_values(
        3,
        values,
        KernelMeta {
            kind: KernelKind::Linear,
            angle_degrees: 0.0,
            length_px: 1.0,
            seed: 0,
        },
    )
    .unwrap()
}

#[test]
fn criterion_01_full_scale_results_recorded_as_reference_metadata() {
    // Paper-scale training is not desk-reproducible; reports must carry the
    // full-scale reference values instead of attempting to reproduce them.
    let reference = FullScaleReference::default();
    let severity = SeverityReference::default();
    let ok = reference.psnr_db == 32.20
        && reference.ssim == 0.9340
        && reference.params_millions == 2.83
        && reference.inference_ms == 61.0
        && severity.psnr_db.min == 10.08
        && severity.psnr_db.mean == 22.32
        && severity.ssim.min == -0.0264
        && severity.ssim.mean == 0.63;
    // and they are embedded in every serialized report
    let json = serde_json::to_string(&reference).unwrap();
    let ok = ok && json.contains("32.2") && json.contains("0.934");
    verdict(
        "1 (reference metadata)",
        ok,
        &format!("restoration reference {json}, severity reference present"),
    );
}

#[test]
fn criterion_02_gradcheck_suite_within_tolerance_and_time() {
    let start = Instant::now();
    let reports = gradcheck::op_suite();
    let ops_worst = gradcheck::worst(&reports);
    let end_to_end = gradcheck::end_to_end(1, 5).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = ops_worst <= gradcheck::OP_TOLERANCE
        && end_to_end.max_rel_err <= gradcheck::END_TO_END_TOLERANCE
        && elapsed <= 120.0;
    verdict(
        "2 (autodiff correctness)",
        ok,
        &format!(
            "ops worst {ops_worst:.3e} (<= 1e-4), end-to-end {:.3e} (<= 1e-3), {elapsed:.1}s (<= 120s)",
            end_to_end.max_rel_err
        ),
    );
}

#[test]
fn criterion_03_frequency_domain_oracle_recovery() {
    let kernel = zero_free_kernel();
    let sharp = text_like_image(64, 64, 64, 1);
    let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel.clone())).unwrap();

    // confirm the spectrum really is zero-free before inverting
    let spectrum = kernel_spectrum(&kernel, (64, 64), false).unwrap();
    let min_mag = spectrum.magnitude.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min_mag > 0.05, "test kernel has near-zero bins ({min_mag})");

    let mut wiener_req = DeconvRequest::new(blurred.clone(), kernel.clone());
    wiener_req.params.nsr = 1e-10;
    let wiener_db = metrics::psnr(&WienerFilter.run(&wiener_req).unwrap(), &sharp, 1.0).unwrap();

    let mut inverse_req = DeconvRequest::new(blurred, kernel);
    inverse_req.params.epsilon = 1e-12;
    let inverse_db = metrics::psnr(&InverseFilter.run(&inverse_req).unwrap(), &sharp, 1.0).unwrap();

    let ok = wiener_db >= 40.0 && inverse_db >= 60.0;
    verdict(
        "3 (oracle recovery)",
        ok,
        &format!("wiener {wiener_db:.2} dB (>= 40), inverse {inverse_db:.2} dB (>= 60)"),
    );
}

#[test]
fn criterion_04_metric_identities() {
    let psnr_ref = psnr_from_mse(1.0, 255.0);
    let psnr_ok = (psnr_ref - 48.1308).abs() <= 1e-3;

    let x = text_like_image(17, 32, 32, 3);
    let self_ssim = metrics::ssim(&x, &x, 1.0).unwrap();
    let self_ok = self_ssim == 1.0;

    let a = ImageTensor::constant(16, 16, 1, 0.2).unwrap();
    let b = ImageTensor::constant(16, 16, 1, 0.8).unwrap();
    let const_ssim = metrics::ssim(&a, &b, 1.0).unwrap();
    let const_ok = (const_ssim - 0.4707).abs() <= 1e-4;

    let mut consistency_worst = 0.0f64;
    for seed in 0..100u64 {
        let p = text_like_image(seed, 16, 16, 3);
        let q = text_like_image(seed ^ 0xFFFF, 16, 16, 3);
        let mse = metrics::mse(&p, &q).unwrap();
        let psnr = metrics::psnr(&p, &q, 1.0).unwrap();
        let expected = if mse > 0.0 {
            10.0 * (1.0 / mse).log10()
        } else {
            PSNR_CAP_DB
        };
        consistency_worst = consistency_worst.max((psnr - expected).abs());
    }
    let consistency_ok = consistency_worst <= 1e-12;

    let ok = psnr_ok && self_ok && const_ok && consistency_ok;
    verdict(
        "4 (metric identities)",
        ok,
        &format!(
            "psnr(mse=1,peak=255) {psnr_ref:.4} dB, ssim(x,x) {self_ssim}, constant-image ssim \
             {const_ssim:.5} (target 0.4707), psnr-mse worst gap {consistency_worst:.2e}"
        ),
    );
}

#[test]
fn criterion_05_richardson_lucy_conserves_flux() {
    let kernel = generate_linear_kernel(9, 35.0, 7.0, 0).unwrap();
    let sharp = positive_text_like_image(5, 64, 64, 1, 0.05);
    let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel.clone())).unwrap();
    let mut req = DeconvRequest::new(blurred, kernel);
    req.params.iterations = 100;
    let (_, trace) = richardson_lucy_trace(&req).unwrap();
    let initial = trace[0];
    let worst = trace
        .iter()
        .map(|flux| (flux - initial).abs() / initial)
        .fold(0.0, f64::max);
    let ok = trace.len() == 101 && worst <= 1e-6;
    verdict(
        "5 (flux conservation)",
        ok,
        &format!("relative drift {worst:.2e} over 100 iterations (<= 1e-6)"),
    );
}

#[test]
fn criterion_06_landweber_and_tv_are_monotone() {
    let kernel = generate_trajectory_kernel(9, 3, 0.5).unwrap();
    let sharp = text_like_image(6, 48, 48, 1);
    let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel.clone())).unwrap();

    let mut lw_req = DeconvRequest::new(blurred.clone(), kernel.clone());
    lw_req.params.iterations = 200;
    lw_req.params.tau = 1.0;
    let (_, residuals) = landweber_trace(&lw_req).unwrap();
    let lw_ok = residuals.len() == 201
        && residuals
            .windows(2)
            .all(|p| p[1] <= p[0] * (1.0 + 1e-12) + 1e-15);

    let mut tv_req = DeconvRequest::new(blurred, kernel);
    tv_req.params.iterations = 200;
    tv_req.params.lambda = 1e-3;
    tv_req.params.step = 1.0;
    let (_, objectives) = tv_trace(&tv_req).unwrap();
    let tv_ok = objectives.len() == 201
        && objectives
            .windows(2)
            .all(|p| p[1] <= p[0] * (1.0 + 1e-12) + 1e-15);

    verdict(
        "6 (iterative monotonicity)",
        lw_ok && tv_ok,
        &format!(
            "landweber residual {:.3e} -> {:.3e}, tv objective {:.3e} -> {:.3e}, both non-increasing",
            residuals[0],
            residuals[200],
            objectives[0],
            objectives[200]
        ),
    );
}

#[test]
fn criterion_07_toy_training_learns_to_deblur() {
    let start = Instant::now();
    let dir = suite_dir("toy_train");
    std::fs::create_dir_all(dir.join("imgs")).unwrap();

    let kernel = generate_linear_kernel(13, 35.0, 9.0, 0).unwrap();
    let mut pairs = Vec::new();
    let mut baseline = 0.0;
    let mut originals = Vec::new();
    for i in 0..8u64 {
        let sharp = text_like_image(i, 64, 64, 3);
        let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel.clone())).unwrap();
        baseline += metrics::psnr(&blurred, &sharp, 1.0).unwrap();
        let blurred_path = dir.join("imgs").join(format!("b{i}.png"));
        let sharp_path = dir.join("imgs").join(format!("s{i}.png"));
        blurred.save_png(&blurred_path).unwrap();
        sharp.save_png(&sharp_path).unwrap();
        originals.push((blurred_path.clone(), sharp_path.clone()));
        pairs.push(PairRecord {
            id: format!("p{i}"),
            blurred_path,
            sharp_path,
            split: Split::Train,
        });
    }
    baseline /= 8.0;
    // overfit probe: validation watches the same eight pairs
    let mut val = pairs.clone();
    for (i, record) in val.iter_mut().enumerate() {
        record.id = format!("v{i}");
        record.split = Split::Val;
    }
    pairs.extend(val);
    let dataset = PairedDataset {
        pairs,
        img_size: (64, 64),
        warnings: vec![],
    };

    let model_config = ModelConfig::toy(11);
    let train_config = TrainConfig {
        epochs_max: 200,
        lr: 1e-3,
        early_stop_patience: 200,
        lr_plateau_patience: 25,
        seed: 11,
        ..Default::default()
    };
    let outcome = train(&dataset, &model_config, &train_config, &dir.join("run")).unwrap();

    let first_loss = outcome.history.first().unwrap().train_loss;
    let last_loss = outcome.history.last().unwrap().train_loss;
    let params = outcome.best.to_model().unwrap();
    let mut restored_mean = 0.0;
    for (blurred_path, sharp_path) in &originals {
        let blurred = ImageTensor::load_png(blurred_path).unwrap();
        let sharp = ImageTensor::load_png(sharp_path).unwrap();
        let restored = deblur_core::model::restore(&params, &blurred).unwrap();
        restored_mean += metrics::psnr(&restored, &sharp, 1.0).unwrap();
    }
    restored_mean /= 8.0;
    let gain = restored_mean - baseline;
    let elapsed_min = start.elapsed().as_secs_f64() / 60.0;

    let ok = gain >= 3.0 && last_loss < 0.25 * first_loss && elapsed_min <= 15.0;
    verdict(
        "7 (toy learning signal)",
        ok,
        &format!(
            "blurred baseline {baseline:.2} dB, restored {restored_mean:.2} dB (gain {gain:+.2} dB, \
             >= +3 required), loss {first_loss:.4} -> {last_loss:.4} (< 0.25x required), \
             {elapsed_min:.1} min (<= 15)"
        ),
    );
}

#[test]
fn criterion_08_architecture_fidelity() {
    let config = ModelConfig::default();
    let params = build_model(&config).unwrap();
    let count = params.param_count();
    let tokens = count_receptive_tokens(&config);

    let input = text_like_image(9, 256, 256, 3);
    let output = forward(&params, &input, Mode::Infer, 0).unwrap();
    let shape_ok = output.shape() == [256, 256, 3];
    let range_ok = output.values().iter().all(|&v| v > 0.0 && v < 1.0);
    let count_ok = (2_000_000..=3_700_000).contains(&count);
    let tokens_ok = tokens == 64;

    let ok = shape_ok && range_ok && count_ok && tokens_ok;
    verdict(
        "8 (architecture fidelity)",
        ok,
        &format!(
            "output {:?} in (0,1): {range_ok}, param count {count} in [2.0M, 3.7M] \
             (full-scale reference 2.83M), {tokens} ViT tokens (64 expected)",
            output.shape()
        ),
    );
}

#[test]
fn criterion_09_generated_corpus_severity_matches_reference_band() {
    let dir = suite_dir("corpus");
    let blurred_dir = dir.join("blurred");
    let sharp_dir = dir.join("sharp");
    std::fs::create_dir_all(&blurred_dir).unwrap();
    std::fs::create_dir_all(&sharp_dir).unwrap();

    let sizes: Vec<usize> = (13..=31).step_by(2).collect();
    let n = 100usize;
    let block = n.div_ceil(sizes.len());
    for i in 0..n {
        let ksize = sizes[(i / block).min(sizes.len() - 1)];
        let seed = 0x5EED ^ i as u64;
        let kernel = if i % 2 == 0 {
            generate_trajectory_kernel(ksize, seed, 0.6).unwrap()
        } else {
            let angle = (seed % 180) as f64;
            let length = (0.45 + ((seed >> 8) % 50) as f64 / 100.0) * ksize as f64;
            generate_linear_kernel(ksize, angle, length.clamp(1.0, ksize as f64), seed).unwrap()
        };
        let sharp = text_like_image(i as u64, 128, 128, 3);
        let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel)).unwrap();
        sharp.save_png(&sharp_dir.join(format!("img_{i:04}.png"))).unwrap();
        blurred.save_png(&blurred_dir.join(format!("img_{i:04}.png"))).unwrap();
    }

    let dataset = ingest(&blurred_dir, &sharp_dir, (128, 128)).unwrap();
    let stats = severity_stats(&dataset).unwrap();
    let reference = SeverityReference::default();

    let psnr_ok = (stats.psnr_db.mean - reference.psnr_db.mean).abs() <= 6.0;
    let ssim_ok = (stats.ssim.mean - reference.ssim.mean).abs() <= 0.2;
    verdict(
        "9 (corpus realism)",
        psnr_ok && ssim_ok,
        &format!(
            "mean PSNR {:.2} dB (band 22.32 +/- 6), mean SSIM {:.4} (band 0.63 +/- 0.2); \
             min PSNR {:.2} dB vs reference {:.2}, min SSIM {:.4} vs reference {:.4}",
            stats.psnr_db.mean,
            stats.ssim.mean,
            stats.psnr_db.min,
            reference.psnr_db.min,
            stats.ssim.min,
            reference.ssim.min
        ),
    );
}

#[test]
fn criterion_10_determinism_and_persistence() {
    let dir = suite_dir("persist");
    // tiny corpus on disk
    let blurred_dir = dir.join("blurred");
    let sharp_dir = dir.join("sharp");
    std::fs::create_dir_all(&blurred_dir).unwrap();
    std::fs::create_dir_all(&sharp_dir).unwrap();
    let kernel = generate_linear_kernel(7, 60.0, 5.0, 0).unwrap();
    for i in 0..5u64 {
        let sharp = text_like_image(i, 32, 32, 3);
        let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel.clone())).unwrap();
        sharp.save_png(&sharp_dir.join(format!("p{i}.png"))).unwrap();
        blurred.save_png(&blurred_dir.join(format!("p{i}.png"))).unwrap();
    }
    let mut dataset = ingest(&blurred_dir, &sharp_dir, (32, 32)).unwrap();
    deblur_core::pipeline::split(&mut dataset, SplitSpec::Counts(3, 1, 1), 4).unwrap();

    let model_config = ModelConfig::reduced(2);
    let train_config = TrainConfig {
        epochs_max: 3,
        lr: 1e-3,
        seed: 21,
        ..Default::default()
    };
    let run_a = train(&dataset, &model_config, &train_config, &dir.join("a")).unwrap();
    let run_b = train(&dataset, &model_config, &train_config, &dir.join("b")).unwrap();

    // learning trajectories are bit-identical (wall-clock timing aside)
    let history_ok = run_a.history.len() == run_b.history.len()
        && run_a.history.iter().zip(&run_b.history).all(|(x, y)| {
            x.epoch == y.epoch
                && x.train_loss.to_bits() == y.train_loss.to_bits()
                && x.val_psnr_db.to_bits() == y.val_psnr_db.to_bits()
                && x.lr.to_bits() == y.lr.to_bits()
        });

    // evaluation from the in-memory checkpoint vs a disk round trip
    let report_pre = evaluate(&dataset, Split::Test, &run_a.best.to_model().unwrap()).unwrap();
    let ckpt_path = dir.join("a/checkpoint_best.dbck");
    let loaded = Checkpoint::load(&ckpt_path).unwrap();
    let report_post = evaluate(&dataset, Split::Test, &loaded.to_model().unwrap()).unwrap();
    let psnr_drift = (report_pre.aggregates.mean_psnr_db - report_post.aggregates.mean_psnr_db).abs();
    let drift_ok = psnr_drift <= 1e-5;

    // save → load → save is byte-identical
    let resaved = dir.join("resaved.dbck");
    loaded.save(&resaved).unwrap();
    let bytes_ok = std::fs::read(&ckpt_path).unwrap() == std::fs::read(&resaved).unwrap();

    verdict(
        "10 (determinism & persistence)",
        history_ok && drift_ok && bytes_ok,
        &format!(
            "identical histories: {history_ok}, eval drift {psnr_drift:.2e} dB (<= 1e-5), \
             byte-identical resave: {bytes_ok}"
        ),
    );
}
