//! Training loop: per-sample forward/loss/backward/Adam with validation
//! PSNR callbacks (early stopping, LR reduction on plateau, best-checkpoint
//! saving) and a per-epoch wall-clock budget.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::loss::{composite_loss, LossWeights, PerceptualExtractor};
use crate::metrics;
use crate::model::{build_model, forward, Mode, ModelConfig};
use crate::pipeline::{Checkpoint, PairedDataset, Split};
use crate::seeds::derive_seed;
use crate::tensor::adam_step;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_max: usize,
    /// Per-sample optimization; the architecture contract is batch size 1.
    pub batch_size: usize,
    pub lr: f64,
    pub early_stop_patience: usize,
    /// Minimum dB improvement that counts as progress.
    pub min_delta_db: f64,
    pub lr_plateau_patience: usize,
    pub lr_plateau_factor: f64,
    pub lr_min: f64,
    pub epoch_time_budget_s: f64,
    pub loss_weights: LossWeights,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Also log per-sample losses to `history_batches.jsonl`.
    #[serde(default)]
    pub log_batches: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 100,
            batch_size: 1,
            lr: 1e-4,
            early_stop_patience: 10,
            min_delta_db: 0.0,
            lr_plateau_patience: 5,
            lr_plateau_factor: 0.5,
            lr_min: 1e-6,
            epoch_time_budget_s: 300.0,
            loss_weights: LossWeights::default(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            log_batches: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::Config(format!(
                "batch_size must be 1 (per-sample contract), got {}",
                self.batch_size
            )));
        }
        if self.epochs_max == 0 {
            return Err(Error::Config("epochs_max must be >= 1".into()));
        }
        if self.lr <= 0.0 || self.lr_min <= 0.0 || self.lr_plateau_factor <= 0.0 || self.lr_plateau_factor >= 1.0 {
            return Err(Error::Config(
                "learning rates must be positive and the plateau factor in (0,1)".into(),
            ));
        }
        if self.epoch_time_budget_s <= 0.0 {
            return Err(Error::Config("epoch_time_budget_s must be > 0".into()));
        }
        self.loss_weights.validate()
    }
}

/// One line of the epoch-level history log (serialized as JSON lines).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_psnr_db: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochRow>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Run the training loop over the dataset's train split, validating on the
/// val split after every epoch. Writes `history.jsonl` and
/// `checkpoint_best.dbck` under `out_dir`.
pub fn train(
    dataset: &PairedDataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    model_config.validate()?;
    if dataset.img_size != model_config.img_size {
        return Err(Error::Config(format!(
            "dataset resolution {:?} does not match model {:?}",
            dataset.img_size, model_config.img_size
        )));
    }
    let train_records = dataset.records(Split::Train);
    let val_records = dataset.records(Split::Val);
    if train_records.is_empty() || val_records.is_empty() {
        return Err(Error::Dataset(format!(
            "training needs non-empty train and val splits ({} train, {} val)",
            train_records.len(),
            val_records.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // Desk-scale datasets fit in memory; decode once.
    let train_pairs: Vec<(String, ImageTensor, ImageTensor)> = train_records
        .iter()
        .map(|r| dataset.load_pair(r).map(|(b, s)| (r.id.clone(), b, s)))
        .collect::<Result<_>>()?;
    let val_pairs: Vec<(ImageTensor, ImageTensor)> = val_records
        .iter()
        .map(|r| dataset.load_pair(r))
        .collect::<Result<_>>()?;

    let mut params = build_model(model_config)?;
    let mut adam = crate::tensor::AdamState::new();
    let extractor = PerceptualExtractor::new();
    let mut lr = config.lr;

    let history_path = out_dir.join("history.jsonl");
    let mut history_file =
        std::fs::File::create(&history_path).map_err(|e| Error::io(&history_path, e))?;
    let mut batch_file = if config.log_batches {
        let path = out_dir.join("history_batches.jsonl");
        Some(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?)
    } else {
        None
    };
    let checkpoint_path = out_dir.join("checkpoint_best.dbck");

    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best: Option<Checkpoint> = None;
    let mut epochs_since_best = 0usize;
    let mut epochs_since_plateau = 0usize;
    let mut stopped_early = false;
    let mut epochs_run = 0usize;

    for epoch in 1..=config.epochs_max {
        let epoch_start = Instant::now();
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, 0));
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        for (step, &idx) in order.iter().enumerate() {
            let (id, blurred, sharp) = &train_pairs[idx];
            let dropout_seed = derive_seed(config.seed, epoch as u64, 1 + step as u64);
            let pred = forward(&params, blurred, Mode::Train, dropout_seed)?;
            let loss = composite_loss(&pred, sharp, &config.loss_weights, &extractor)?;
            let loss_value = loss.item()?;
            if !loss_value.is_finite() {
                let snapshot = serde_json::json!({
                    "epoch": epoch,
                    "step": step,
                    "sample_id": id,
                    "loss": format!("{loss_value}"),
                    "lr": lr,
                });
                let snap_path = out_dir.join("diagnostic_failure.json");
                let _ = std::fs::write(&snap_path, snapshot.to_string());
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss_value} at epoch {epoch}, step {step}, sample '{id}' \
                     (snapshot written to {})",
                    snap_path.display()
                )));
            }
            loss.backward()?;
            adam_step(
                params.tensors_mut(),
                &mut adam,
                lr,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_eps,
            )?;
            loss_sum += loss_value;
            samples += 1;
            if let Some(file) = batch_file.as_mut() {
                let row = serde_json::json!({
                    "epoch": epoch,
                    "step": step,
                    "sample_id": id,
                    "loss": loss_value,
                    "lr": lr,
                });
                writeln!(file, "{row}").map_err(|e| Error::io(out_dir, e))?;
            }
            if epoch_start.elapsed().as_secs_f64() > config.epoch_time_budget_s {
                break; // budget exhausted: finish the epoch cleanly
            }
        }

        let mut val_sum = 0.0;
        for (blurred, sharp) in &val_pairs {
            let restored = crate::model::restore(&params, blurred)?;
            val_sum += metrics::psnr(&restored, sharp, 1.0)?;
        }
        let val_psnr = val_sum / val_pairs.len() as f64;

        let row = EpochRow {
            epoch,
            train_loss: loss_sum / samples.max(1) as f64,
            val_psnr_db: val_psnr,
            lr,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        let line = serde_json::to_string(&row).map_err(|e| Error::Numeric(e.to_string()))?;
        writeln!(history_file, "{line}").map_err(|e| Error::io(&history_path, e))?;
        history.push(row);
        epochs_run = epoch;

        if val_psnr > best_val + config.min_delta_db {
            best_val = val_psnr;
            epochs_since_best = 0;
            epochs_since_plateau = 0;
            let ckpt = Checkpoint::capture(&params, &adam, epoch, best_val);
            ckpt.save(&checkpoint_path)?;
            best = Some(ckpt);
        } else {
            epochs_since_best += 1;
            epochs_since_plateau += 1;
        }

        if epochs_since_plateau >= config.lr_plateau_patience && lr > config.lr_min {
            lr = (lr * config.lr_plateau_factor).max(config.lr_min);
            epochs_since_plateau = 0;
        }
        if epochs_since_best >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }

    let best = best.ok_or_else(|| Error::Numeric("no epoch produced a checkpoint".into()))?;
    Ok(TrainOutcome {
        best,
        history,
        epochs_run,
        stopped_early,
    })
}
