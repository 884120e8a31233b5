//! Image-quality metrics: MSE, MAE, PSNR, and windowed SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// PSNR reported for bit-identical images, keeping aggregates finite.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Full set of full-reference scores for one image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae: f64,
}

impl MetricResult {
    pub fn compute(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<Self> {
        Ok(Self {
            mse: mse(a, b)?,
            psnr_db: psnr(a, b, peak)?,
            ssim: ssim(a, b, peak)?,
            mae: mae(a, b)?,
        })
    }
}

fn check_shapes(op: &str, a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::Dimension(format!(
            "{op}: image shapes {}x{}x{} and {}x{}x{} differ",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared difference over all pixels and channels.
pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_shapes("mse", a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Mean absolute difference over all pixels and channels.
pub fn mae(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_shapes("mae", a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(peak² / mse)`, capped at [`PSNR_CAP_DB`] when `mse = 0`.
pub fn psnr(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    if peak <= 0.0 {
        return Err(Error::Parameter(format!("peak must be > 0, got {peak}")));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// PSNR from a precomputed MSE (same capping rule).
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Normalized 2-D Gaussian window, `size`×`size`, row-major.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let g1: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut w = Vec::with_capacity(size * size);
    for gi in &g1 {
        for gj in &g1 {
            w.push(gi * gj);
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// `C1 = (0.01·peak)²`, `C2 = (0.03·peak)²`. The local map is computed per
/// channel over all fully supported window positions and averaged.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    check_shapes("ssim", a, b)?;
    if peak <= 0.0 {
        return Err(Error::Parameter(format!("peak must be > 0, got {peak}")));
    }
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let (h, w) = (a.height(), a.width());
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..a.channels() {
        let pa = a.channel_plane(c);
        let pb = b.channel_plane(c);
        let mut channel_sum = 0.0;
        for wy in 0..oh {
            for wx in 0..ow {
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                let mut xx = 0.0;
                let mut yy = 0.0;
                let mut xy = 0.0;
                for i in 0..SSIM_WINDOW {
                    let row_a = &pa[(wy + i) * w + wx..(wy + i) * w + wx + SSIM_WINDOW];
                    let row_b = &pb[(wy + i) * w + wx..(wy + i) * w + wx + SSIM_WINDOW];
                    let wrow = &window[i * SSIM_WINDOW..(i + 1) * SSIM_WINDOW];
                    for j in 0..SSIM_WINDOW {
                        let (x, y, g) = (row_a[j], row_b[j], wrow[j]);
                        mu_x += g * x;
                        mu_y += g * y;
                        xx += g * x * x;
                        yy += g * y * y;
                        xy += g * x * y;
                    }
                }
                let var_x = xx - mu_x * mu_x;
                let var_y = yy - mu_y * mu_y;
                let cov = xy - mu_x * mu_y;
                let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
                let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
                channel_sum += num / den;
            }
        }
        total += channel_sum / (oh * ow) as f64;
    }
    Ok(total / a.channels() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, vals: Vec<f64>) -> ImageTensor {
        ImageTensor::new(h, w, 1, vals).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        let a = img(1, 2, vec![0.0, 0.0]);
        let b = img(1, 2, vec![0.5, 1.0]);
        assert!((mse(&a, &b).unwrap() - 0.625).abs() < 1e-15);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let zeros = img(2, 2, vec![0.0; 4]);
        let ones = img(2, 2, vec![1.0; 4]);
        assert!((mse(&zeros, &ones).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psnr_cap_and_reference_point() {
        let a = img(2, 2, vec![0.3; 4]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        // mse = 1 with peak 255 → 48.1308 dB
        assert!((psnr_from_mse(1.0, 255.0) - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let x = crate::fixtures::text_like_image(3, 24, 24, 3);
        assert_eq!(ssim(&x, &x, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_images_match_hand_derivation() {
        // variances vanish: SSIM = (2·0.16 + 1e-4) / (0.04 + 0.64 + 1e-4)
        let a = ImageTensor::constant(16, 16, 1, 0.2).unwrap();
        let b = ImageTensor::constant(16, 16, 1, 0.8).unwrap();
        let got = ssim(&a, &b, 1.0).unwrap();
        assert!((got - 0.4707).abs() < 1e-4, "got {got}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = ImageTensor::constant(8, 8, 1, 0.2).unwrap();
        assert!(ssim(&a, &a, 1.0).is_err());
    }

    #[test]
    fn metric_result_bundles_all_four() {
        let a = crate::fixtures::text_like_image(1, 16, 16, 1);
        let b = crate::fixtures::text_like_image(2, 16, 16, 1);
        let m = MetricResult::compute(&a, &b, 1.0).unwrap();
        assert!(m.mse > 0.0 && m.mae > 0.0);
        assert!((m.psnr_db - psnr_from_mse(m.mse, 1.0)).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&m.ssim));
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric(seed_a in 0u64..500, seed_b in 500u64..1000) {
            let a = crate::fixtures::text_like_image(seed_a, 16, 16, 1);
            let b = crate::fixtures::text_like_image(seed_b, 16, 16, 1);
            let ab = ssim(&a, &b, 1.0).unwrap();
            let ba = ssim(&b, &a, 1.0).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn psnr_is_consistent_with_mse(seed_a in 0u64..500, seed_b in 0u64..500) {
            let a = crate::fixtures::text_like_image(seed_a, 12, 12, 3);
            let b = crate::fixtures::text_like_image(seed_b, 12, 12, 3);
            let m = mse(&a, &b).unwrap();
            let p = psnr(&a, &b, 1.0).unwrap();
            if m > 0.0 {
                prop_assert!((p - 10.0 * (1.0 / m).log10()).abs() < 1e-12);
            } else {
                prop_assert_eq!(p, PSNR_CAP_DB);
            }
        }
    }
}
