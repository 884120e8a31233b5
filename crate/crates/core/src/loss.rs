//! Training losses: the four-term composite objective and its pieces.
//!
//! The perceptual term uses a fixed-seed random convolutional extractor
//! instead of pretrained features; its weights are drawn once from seed
//! `0xD3B1` and frozen, so features are identical across runs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::metrics::{gaussian_window, SSIM_SIGMA, SSIM_WINDOW};
use crate::tensor::{conv2d, ConvSpec, DiffTensor, Padding};

pub const PERCEPTUAL_SEED: u64 = 0xD3B1;

/// Weights of the composite loss
/// `alpha·MAE + beta·MSE + gamma·perceptual + delta·(1 − SSIM)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            delta: 0.5,
        }
    }
}

impl LossWeights {
    /// Pure-MAE objective (the single-term reading of the training setup).
    pub fn mae_only() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.alpha, self.beta, self.gamma, self.delta];
        if ws.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be > 0".into()));
        }
        Ok(())
    }
}

/// Three frozen conv stages (3→16→32→64, 3×3, stride 2, ReLU) used as a
/// deterministic feature space for the perceptual term.
pub struct PerceptualExtractor {
    stages: Vec<(DiffTensor, DiffTensor, ConvSpec)>,
}

impl PerceptualExtractor {
    pub fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(PERCEPTUAL_SEED);
        let channels = [3usize, 16, 32, 64];
        let mut stages = Vec::new();
        for win in channels.windows(2) {
            let (cin, cout) = (win[0], win[1]);
            let limit = (6.0 / (3.0 * 3.0 * cin as f64)).sqrt();
            let w_vals: Vec<f64> = (0..3 * 3 * cin * cout)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            let weights = DiffTensor::constant(vec![3, 3, cin, cout], w_vals).expect("weights");
            let bias = DiffTensor::constant(vec![cout], vec![0.0; cout]).expect("bias");
            stages.push((weights, bias, ConvSpec::same(3, 2, cin, cout)));
        }
        Self { stages }
    }

    /// Post-ReLU feature maps of the three stages.
    pub fn features(&self, input: &DiffTensor) -> Result<Vec<DiffTensor>> {
        let mut maps = Vec::with_capacity(self.stages.len());
        let mut x = input.clone();
        for (w, b, spec) in &self.stages {
            x = conv2d(&x, w, b, spec)?.relu();
            maps.push(x.clone());
        }
        Ok(maps)
    }
}

impl Default for PerceptualExtractor {
    fn default() -> Self {
        Self::new()
    }
}

fn constant_image(img: &ImageTensor) -> DiffTensor {
    DiffTensor::constant(
        vec![img.height(), img.width(), img.channels()],
        img.data().to_vec(),
    )
    .expect("image shape")
}

fn check_pred_shape(pred: &DiffTensor, target: &ImageTensor) -> Result<()> {
    let expect = [target.height(), target.width(), target.channels()];
    if pred.shape() != expect {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} does not match target {:?}",
            pred.shape(),
            expect
        )));
    }
    Ok(())
}

/// Sum over extractor stages of mean squared feature differences;
/// differentiable in `pred`.
pub fn perceptual_loss(
    pred: &DiffTensor,
    target: &ImageTensor,
    extractor: &PerceptualExtractor,
) -> Result<DiffTensor> {
    if target.channels() != 3 {
        return Err(Error::Dimension(format!(
            "perceptual loss needs 3-channel images, got {}",
            target.channels()
        )));
    }
    check_pred_shape(pred, target)?;
    let f_pred = extractor.features(pred)?;
    let f_target = extractor.features(&constant_image(target))?;
    let mut total: Option<DiffTensor> = None;
    for (fp, ft) in f_pred.iter().zip(&f_target) {
        let d = fp.sub(ft)?;
        let term = d.mul(&d)?.mean();
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("extractor has stages"))
}

/// Differentiable mean SSIM with the same 11×11 Gaussian window (σ = 1.5)
/// and constants as [`crate::metrics::ssim`]; per channel, valid window
/// positions only.
pub fn ssim_differentiable(pred: &DiffTensor, target: &ImageTensor, peak: f64) -> Result<DiffTensor> {
    check_pred_shape(pred, target)?;
    if target.height() < SSIM_WINDOW || target.width() < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            target.height(),
            target.width()
        )));
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let window = DiffTensor::constant(
        vec![SSIM_WINDOW, SSIM_WINDOW, 1, 1],
        gaussian_window(SSIM_WINDOW, SSIM_SIGMA),
    )?;
    let zero_bias = DiffTensor::constant(vec![1], vec![0.0])?;
    let spec = ConvSpec {
        kernel_h: SSIM_WINDOW,
        kernel_w: SSIM_WINDOW,
        stride: 1,
        padding: Padding::Valid,
        in_channels: 1,
        out_channels: 1,
    };
    let win_mean = |x: &DiffTensor| -> Result<DiffTensor> { conv2d(x, &window, &zero_bias, &spec) };

    let target_t = constant_image(target);
    let channels = target.channels();
    let mut acc: Option<DiffTensor> = None;
    for c in 0..channels {
        let x = pred.slice_last_axis(c, 1)?;
        let y = target_t.slice_last_axis(c, 1)?;
        let mu_x = win_mean(&x)?;
        let mu_y = win_mean(&y)?;
        let var_x = win_mean(&x.mul(&x)?)?.sub(&mu_x.mul(&mu_x)?)?;
        let var_y = win_mean(&y.mul(&y)?)?.sub(&mu_y.mul(&mu_y)?)?;
        let cov = win_mean(&x.mul(&y)?)?.sub(&mu_x.mul(&mu_y)?)?;
        let num = mu_x
            .mul(&mu_y)?
            .scale(2.0)
            .add_scalar(c1)
            .mul(&cov.scale(2.0).add_scalar(c2))?;
        let den = mu_x
            .mul(&mu_x)?
            .add(&mu_y.mul(&mu_y)?)?
            .add_scalar(c1)
            .mul(&var_x.add(&var_y)?.add_scalar(c2))?;
        let channel_mean = num.div(&den)?.mean();
        acc = Some(match acc {
            Some(t) => t.add(&channel_mean)?,
            None => channel_mean,
        });
    }
    Ok(acc.expect("at least one channel").scale(1.0 / channels as f64))
}

/// `alpha·MAE + beta·MSE + gamma·perceptual + delta·(1 − SSIM)`,
/// differentiable end-to-end in `pred`.
pub fn composite_loss(
    pred: &DiffTensor,
    target: &ImageTensor,
    weights: &LossWeights,
    extractor: &PerceptualExtractor,
) -> Result<DiffTensor> {
    weights.validate()?;
    check_pred_shape(pred, target)?;
    let target_t = constant_image(target);
    let diff = pred.sub(&target_t)?;
    let mut total = DiffTensor::scalar(0.0);
    if weights.alpha > 0.0 {
        total = total.add(&diff.abs().mean().scale(weights.alpha))?;
    }
    if weights.beta > 0.0 {
        total = total.add(&diff.mul(&diff)?.mean().scale(weights.beta))?;
    }
    if weights.gamma > 0.0 {
        total = total.add(&perceptual_loss(pred, target, extractor)?.scale(weights.gamma))?;
    }
    if weights.delta > 0.0 {
        let ssim = ssim_differentiable(pred, target, 1.0)?;
        total = total.add(&ssim.scale(-1.0).add_scalar(1.0).scale(weights.delta))?;
    }
    Ok(total)
}
