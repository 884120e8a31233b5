//! Evaluation reports and single-image restoration.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classical::{find_method, DeconvParams, DeconvRequest};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::metrics;
use crate::model::{restore, ModelParams};
use crate::pipeline::{Checkpoint, PairedDataset, Split};
use crate::psf::BlurKernel;

/// Full-scale reference results for this architecture, recorded in every
/// report for comparison; desk-scale runs are not expected to reach them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullScaleReference {
    pub psnr_db: f64,
    pub ssim: f64,
    pub params_millions: f64,
    pub inference_ms: f64,
}

impl Default for FullScaleReference {
    fn default() -> Self {
        Self {
            psnr_db: 32.20,
            ssim: 0.9340,
            params_millions: 2.83,
            inference_ms: 61.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageEval {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregates {
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub min_psnr_db: f64,
    pub max_psnr_db: f64,
    pub min_ssim: f64,
    pub max_ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalTiming {
    pub mean_inference_ms: f64,
}

/// Per-image scores plus aggregates, inference timing, the model size, and
/// the full-scale reference values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub per_image: Vec<ImageEval>,
    pub aggregates: EvalAggregates,
    pub timing: EvalTiming,
    pub param_count: usize,
    pub full_scale_reference: FullScaleReference,
}

impl EvalReport {
    /// Recompute aggregates from the per-image rows (consistency check).
    pub fn recompute_aggregates(&self) -> EvalAggregates {
        aggregate(&self.per_image)
    }
}

fn aggregate(rows: &[ImageEval]) -> EvalAggregates {
    let n = rows.len() as f64;
    let mut agg = EvalAggregates {
        mean_psnr_db: 0.0,
        mean_ssim: 0.0,
        min_psnr_db: f64::INFINITY,
        max_psnr_db: f64::NEG_INFINITY,
        min_ssim: f64::INFINITY,
        max_ssim: f64::NEG_INFINITY,
    };
    for row in rows {
        agg.mean_psnr_db += row.psnr_db;
        agg.mean_ssim += row.ssim;
        agg.min_psnr_db = agg.min_psnr_db.min(row.psnr_db);
        agg.max_psnr_db = agg.max_psnr_db.max(row.psnr_db);
        agg.min_ssim = agg.min_ssim.min(row.ssim);
        agg.max_ssim = agg.max_ssim.max(row.ssim);
    }
    agg.mean_psnr_db /= n;
    agg.mean_ssim /= n;
    agg
}

/// Score an arbitrary restorer over `split`; rows keep dataset order.
/// `restorer` maps a blurred image to its restoration.
pub fn evaluate_with<F>(
    dataset: &PairedDataset,
    split: Split,
    param_count: usize,
    mut restorer: F,
) -> Result<EvalReport>
where
    F: FnMut(&ImageTensor) -> Result<ImageTensor>,
{
    let records = dataset.records(split);
    if records.is_empty() {
        return Err(Error::Dataset(format!("split {split:?} is empty")));
    }
    let mut per_image = Vec::with_capacity(records.len());
    let mut total_ms = 0.0;
    for record in records {
        let (blurred, sharp) = dataset.load_pair(record)?;
        let start = Instant::now();
        let restored = restorer(&blurred)?;
        total_ms += start.elapsed().as_secs_f64() * 1e3;
        per_image.push(ImageEval {
            id: record.id.clone(),
            psnr_db: metrics::psnr(&restored, &sharp, 1.0)?,
            ssim: metrics::ssim(&restored, &sharp, 1.0)?,
        });
    }
    let aggregates = aggregate(&per_image);
    let timing = EvalTiming {
        mean_inference_ms: total_ms / per_image.len() as f64,
    };
    Ok(EvalReport {
        split,
        per_image,
        aggregates,
        timing,
        param_count,
        full_scale_reference: FullScaleReference::default(),
    })
}

/// Restore every image in `split` with the model and score it against its
/// sharp original. Inference runs in deterministic infer mode.
pub fn evaluate(dataset: &PairedDataset, split: Split, params: &ModelParams) -> Result<EvalReport> {
    if dataset.img_size != params.config().img_size {
        return Err(Error::Config(format!(
            "dataset resolution {:?} does not match checkpoint {:?}",
            dataset.img_size,
            params.config().img_size
        )));
    }
    evaluate_with(dataset, split, params.param_count(), |blurred| {
        restore(params, blurred)
    })
}

/// Restore one image with a trained checkpoint and write the PNG. No ground
/// truth is involved, so no metrics are produced.
pub fn deblur_single_model(input: &Path, checkpoint: &Checkpoint, output: &Path) -> Result<()> {
    let params = checkpoint.to_model()?;
    let (h, w) = params.config().img_size;
    let image = ImageTensor::load_png(input)?.resize_bilinear(h, w)?;
    restore(&params, &image)?.save_png(output)
}

/// Restore one image with a registered classical method and write the PNG.
pub fn deblur_single_classical(
    input: &Path,
    method_name: &str,
    kernel: &BlurKernel,
    params: DeconvParams,
    output: &Path,
    resize_to: Option<(usize, usize)>,
) -> Result<()> {
    let method = find_method(method_name)?;
    let mut image = ImageTensor::load_png(input)?;
    if let Some((h, w)) = resize_to {
        image = image.resize_bilinear(h, w)?;
    }
    let mut request = DeconvRequest::new(image, kernel.clone());
    request.params = params;
    method.run(&request)?.save_png(output)
}
