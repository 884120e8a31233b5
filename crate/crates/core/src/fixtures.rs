//! Procedural text-like images for corpora and tests.
//!
//! No real scene-text corpus ships with the toolkit, so demos and tests
//! synthesize sharp inputs that mimic photographed text: a smooth
//! low-frequency background with a few lines of moderate-contrast glyph
//! strokes. Deterministic in the seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::image::ImageTensor;

/// Deterministic text-like image: glyph rows over a smooth background.
pub fn text_like_image(seed: u64, height: usize, width: usize, channels: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: f64 = rng.random_range(0.6..0.85);
    let mut luma = vec![base; height * width];

    // low-frequency scenery: a gentle gradient plus a few soft blobs
    let gx: f64 = rng.random_range(-0.1..0.1);
    let gy: f64 = rng.random_range(-0.1..0.1);
    for y in 0..height {
        for x in 0..width {
            luma[y * width + x] +=
                gx * (x as f64 / width as f64 - 0.5) + gy * (y as f64 / height as f64 - 0.5);
        }
    }
    let blobs = rng.random_range(2..5);
    for _ in 0..blobs {
        let cx: f64 = rng.random_range(0.0..width as f64);
        let cy: f64 = rng.random_range(0.0..height as f64);
        let sigma: f64 = rng.random_range(0.2..0.45) * width.max(height) as f64;
        let amp: f64 = rng.random_range(-0.12..0.12);
        for y in 0..height {
            for x in 0..width {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                luma[y * width + x] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    // a few lines of solid glyph strokes at moderate contrast
    let line_h = (height / 9).max(4);
    let mut y = rng.random_range(0..line_h);
    while y + line_h <= height {
        if rng.random::<f64>() < 0.55 {
            let contrast: f64 = rng.random_range(0.3..0.55);
            let glyph_h = rng.random_range((line_h * 2) / 3..line_h.max((line_h * 2) / 3 + 1));
            let mut x = rng.random_range(1..(2 * line_h).max(2));
            while x + 2 < width {
                let glyph_w = rng.random_range(2..(line_h + 2).max(3));
                if rng.random::<f64>() < 0.75 {
                    let x_end = (x + glyph_w).min(width);
                    let y_end = (y + glyph_h).min(height);
                    for yy in y..y_end {
                        for xx in x..x_end {
                            luma[yy * width + xx] -= contrast;
                        }
                    }
                }
                x += glyph_w + rng.random_range(2..6);
            }
        }
        y += line_h + rng.random_range(1..4);
    }

    let mut data = Vec::with_capacity(height * width * channels);
    if channels == 1 {
        data.extend(luma.iter().map(|v| v.clamp(0.0, 1.0)));
    } else {
        // mild per-channel tint so RGB images are not perfectly gray
        let tint: Vec<f64> = (0..channels).map(|_| rng.random_range(-0.04..0.04)).collect();
        for &v in &luma {
            for t in &tint {
                data.push((v + t).clamp(0.0, 1.0));
            }
        }
    }
    ImageTensor::new(height, width, channels, data).expect("fixture shape")
}

/// Text-like image remapped into `[floor, 1]`; useful where solvers require
/// strictly positive intensities.
pub fn positive_text_like_image(
    seed: u64,
    height: usize,
    width: usize,
    channels: usize,
    floor: f64,
) -> ImageTensor {
    let mut img = text_like_image(seed, height, width, channels);
    for v in img.data_mut() {
        *v = floor + (1.0 - floor) * *v;
    }
    img
}
