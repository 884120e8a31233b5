//! Motion-blur point-spread functions: parametric generators, the
//! `y = x * k + n` degradation model, and frequency-domain diagnostics.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::image::ImageTensor;

pub const MIN_KERNEL_SIZE: usize = 3;
pub const MAX_KERNEL_SIZE: usize = 63;
const SUM_TOL: f64 = 1e-9;

/// Which generator produced a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Trajectory,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Linear => write!(f, "linear"),
            KernelKind::Trajectory => write!(f, "trajectory"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub kind: KernelKind,
    pub angle_degrees: f64,
    pub length_px: f64,
    pub seed: u64,
}

/// Odd-sized nonnegative PSF whose values sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    values: Vec<f64>,
    meta: KernelMeta,
}

impl BlurKernel {
    /// Validate and wrap raw values (must already sum to 1 within 1e-9).
    pub fn from_values(size: usize, values: Vec<f64>, meta: KernelMeta) -> Result<Self> {
        if size % 2 == 0 || !(MIN_KERNEL_SIZE..=MAX_KERNEL_SIZE).contains(&size) {
            return Err(Error::Parameter(format!(
                "kernel size must be odd and within [{MIN_KERNEL_SIZE}, {MAX_KERNEL_SIZE}], got {size}"
            )));
        }
        if values.len() != size * size {
            return Err(Error::Dimension(format!(
                "kernel buffer holds {} values, expected {}",
                values.len(),
                size * size
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Parameter("kernel values must be finite and >= 0".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Parameter(format!(
                "kernel values sum to {sum}, expected 1 within {SUM_TOL}"
            )));
        }
        Ok(Self { size, values, meta })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &KernelMeta {
        &self.meta
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Kernel with all mass at the center (identity under convolution).
    pub fn delta(size: usize) -> Result<Self> {
        let mut values = vec![0.0; size * size];
        values[(size / 2) * size + size / 2] = 1.0;
        Self::from_values(
            size,
            values,
            KernelMeta {
                kind: KernelKind::Linear,
                angle_degrees: 0.0,
                length_px: 1.0,
                seed: 0,
            },
        )
    }

    /// Text format: `PSF v1 <size>` then `size` rows of `size` floats.
    pub fn write_psf(&self, path: &Path) -> Result<()> {
        let mut out = format!("PSF v1 {}\n", self.size);
        for row in self.values.chunks_exact(self.size) {
            let fields: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Parse the text format, re-verifying every invariant.
    pub fn read_psf(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parameter(format!("{}: empty PSF file", path.display())))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "PSF" || parts[1] != "v1" {
            return Err(Error::Parameter(format!(
                "{}: bad PSF header '{header}'",
                path.display()
            )));
        }
        let size: usize = parts[2]
            .parse()
            .map_err(|_| Error::Parameter(format!("{}: bad size '{}'", path.display(), parts[2])))?;
        let mut values = Vec::with_capacity(size * size);
        for (i, line) in lines.take(size).enumerate() {
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|_| {
                Error::Parameter(format!("{}: unparseable row {}", path.display(), i + 2))
            })?;
            if row.len() != size {
                return Err(Error::Parameter(format!(
                    "{}: row {} has {} values, expected {size}",
                    path.display(),
                    i + 2,
                    row.len()
                )));
            }
            values.extend(row);
        }
        Self::from_values(
            size,
            values,
            KernelMeta {
                kind: KernelKind::Linear,
                angle_degrees: f64::NAN,
                length_px: f64::NAN,
                seed: 0,
            },
        )
        .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Sample positions for a straight streak of the given on-screen length,
/// centered on the kernel center. Length 1 collapses to the center point.
fn line_positions(size: usize, angle_degrees: f64, length_px: f64) -> Vec<(f64, f64)> {
    let center = (size as f64 - 1.0) / 2.0;
    let half = (length_px - 1.0) / 2.0;
    let theta = angle_degrees.to_radians();
    let (dx, dy) = (theta.cos(), theta.sin());
    let n_samples = ((length_px * 8.0).ceil() as usize).max(1);
    (0..n_samples)
        .map(|i| {
            let t = if n_samples == 1 {
                0.0
            } else {
                -half + (2.0 * half) * i as f64 / (n_samples - 1) as f64
            };
            (center + t * dx, center + t * dy)
        })
        .collect()
}

/// Bilinear splat of sub-pixel positions onto a size×size grid, normalized
/// to sum 1.
fn splat_positions(size: usize, positions: &[(f64, f64)]) -> Vec<f64> {
    let mut grid = vec![0.0; size * size];
    for &(x, y) in positions {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut put = |xi: isize, yi: isize, w: f64| {
            if w > 0.0 && xi >= 0 && yi >= 0 && (xi as usize) < size && (yi as usize) < size {
                grid[yi as usize * size + xi as usize] += w;
            }
        };
        put(x0 as isize, y0 as isize, (1.0 - fx) * (1.0 - fy));
        put(x0 as isize + 1, y0 as isize, fx * (1.0 - fy));
        put(x0 as isize, y0 as isize + 1, (1.0 - fx) * fy);
        put(x0 as isize + 1, y0 as isize + 1, fx * fy);
    }
    let sum: f64 = grid.iter().sum();
    debug_assert!(sum > 0.0, "splat produced an empty kernel");
    for v in &mut grid {
        *v /= sum;
    }
    grid
}

/// Anti-aliased linear motion streak through the kernel center.
pub fn generate_linear_kernel(
    size: usize,
    angle_degrees: f64,
    length_px: f64,
    seed: u64,
) -> Result<BlurKernel> {
    if size % 2 == 0 || size < MIN_KERNEL_SIZE {
        return Err(Error::Parameter(format!(
            "kernel size must be odd and >= {MIN_KERNEL_SIZE}, got {size}"
        )));
    }
    if !(1.0..=size as f64).contains(&length_px) {
        return Err(Error::Parameter(format!(
            "streak length {length_px} must lie in [1, size={size}]"
        )));
    }
    let values = splat_positions(size, &line_positions(size, angle_degrees, length_px));
    BlurKernel::from_values(
        size,
        values,
        KernelMeta {
            kind: KernelKind::Linear,
            angle_degrees,
            length_px,
            seed,
        },
    )
}

/// Smoothed random sub-pixel trajectory rasterized with bilinear splatting.
/// Direction and length are drawn from the seed; `jitter` scales a smoothed
/// perpendicular wander, so `jitter = 0` degenerates to the straight streak
/// with the drawn angle and length.
pub fn generate_trajectory_kernel(size: usize, seed: u64, jitter: f64) -> Result<BlurKernel> {
    if size % 2 == 0 || size < MIN_KERNEL_SIZE {
        return Err(Error::Parameter(format!(
            "kernel size must be odd and >= {MIN_KERNEL_SIZE}, got {size}"
        )));
    }
    if jitter < 0.0 {
        return Err(Error::Parameter(format!("jitter must be >= 0, got {jitter}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.random_range(0.0..180.0);
    let length: f64 = rng.random_range(0.45..0.95) * (size as f64 - 1.0) + 1.0;
    let length = length.clamp(1.0, size as f64);
    let mut positions = line_positions(size, angle, length);

    // Smoothed accelerations accumulated twice give a gently curving path.
    let n = positions.len();
    let mut accel: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0_f64),
                rng.random_range(-1.0..1.0_f64),
            )
        })
        .collect();
    let window = 5usize;
    let smoothed: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(window / 2);
            let hi = (i + window / 2 + 1).min(n);
            let m = (hi - lo) as f64;
            let sx: f64 = accel[lo..hi].iter().map(|a| a.0).sum();
            let sy: f64 = accel[lo..hi].iter().map(|a| a.1).sum();
            (sx / m, sy / m)
        })
        .collect();
    accel = smoothed;
    let mut vel = (0.0, 0.0);
    let mut offset = (0.0, 0.0);
    let step = length / n as f64;
    let mut offsets = Vec::with_capacity(n);
    for a in &accel {
        vel.0 = 0.9 * vel.0 + a.0;
        vel.1 = 0.9 * vel.1 + a.1;
        offset.0 += jitter * step * vel.0;
        offset.1 += jitter * step * vel.1;
        offsets.push(offset);
    }
    // Recenter the wander so the path mass stays centered.
    let mx = offsets.iter().map(|o| o.0).sum::<f64>() / n as f64;
    let my = offsets.iter().map(|o| o.1).sum::<f64>() / n as f64;
    for (p, o) in positions.iter_mut().zip(&offsets) {
        p.0 += o.0 - mx;
        p.1 += o.1 - my;
    }
    // Rescale into the kernel if the wander escaped it.
    let center = (size as f64 - 1.0) / 2.0;
    let max_off = positions
        .iter()
        .map(|p| (p.0 - center).abs().max((p.1 - center).abs()))
        .fold(0.0, f64::max);
    if max_off > center {
        let scale = center / max_off;
        for p in &mut positions {
            p.0 = center + (p.0 - center) * scale;
            p.1 = center + (p.1 - center) * scale;
        }
    }
    let values = splat_positions(size, &positions);
    BlurKernel::from_values(
        size,
        values,
        KernelMeta {
            kind: KernelKind::Trajectory,
            angle_degrees: angle,
            length_px: length,
            seed,
        },
    )
}

// ---------------------------------------------------------------------------
// Degradation model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Wrap-around; spatial convolution equals spectral multiplication.
    Circular,
    /// Mirror the image at its edges (edge pixel included once).
    Reflect,
}

#[derive(Debug, Clone)]
pub struct DegradationConfig {
    pub kernel: BlurKernel,
    /// Std-dev of additive Gaussian noise in unit-intensity scale; must be < 1.
    pub noise_sigma: f64,
    pub boundary: Boundary,
    pub rng_seed: u64,
}

impl DegradationConfig {
    pub fn noiseless(kernel: BlurKernel) -> Self {
        Self {
            kernel,
            noise_sigma: 0.0,
            boundary: Boundary::Circular,
            rng_seed: 0,
        }
    }
}

/// Apply `y = x * k + n` per channel (true convolution: the kernel is
/// flipped), then clamp to `[0, 1]`.
pub fn apply_blur(sharp: &ImageTensor, config: &DegradationConfig) -> Result<ImageTensor> {
    if !(0.0..1.0).contains(&config.noise_sigma) {
        return Err(Error::Parameter(format!(
            "noise sigma {} must lie in [0, 1)",
            config.noise_sigma
        )));
    }
    let k = config.kernel.size();
    let (h, w) = (sharp.height(), sharp.width());
    if k > h || k > w {
        return Err(Error::Parameter(format!(
            "kernel {k}x{k} does not fit inside {h}x{w} image"
        )));
    }
    let c = (k / 2) as isize;
    let kv = config.kernel.values();
    let channels = sharp.channels();
    let mut out = vec![0.0; h * w * channels];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for ch in 0..channels {
                let mut acc = 0.0;
                for i in 0..k as isize {
                    for j in 0..k as isize {
                        let weight = kv[(i * k as isize + j) as usize];
                        if weight == 0.0 {
                            continue;
                        }
                        // true convolution: source offset is negated
                        let sy = y - (i - c);
                        let sx = x - (j - c);
                        let (sy, sx) = match config.boundary {
                            Boundary::Circular => (
                                sy.rem_euclid(h as isize) as usize,
                                sx.rem_euclid(w as isize) as usize,
                            ),
                            Boundary::Reflect => (reflect_index(sy, h), reflect_index(sx, w)),
                        };
                        acc += weight * sharp.at(sy, sx, ch);
                    }
                }
                out[(y as usize * w + x as usize) * channels + ch] = acc;
            }
        }
    }
    if config.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        for v in &mut out {
            *v += config.noise_sigma * gaussian_sample(&mut rng);
        }
    }
    Ok(ImageTensor::new(h, w, channels, out)?.clamp_unit())
}

/// Symmetric reflection: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - 1 - i;
    }
    i as usize
}

/// Box-Muller standard normal draw.
fn gaussian_sample<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.random();
        if u > f64::MIN_POSITIVE {
            break u;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Spectrum diagnostics
// ---------------------------------------------------------------------------

/// Magnitude of the kernel's transfer function on a target-size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumImage {
    pub height: usize,
    pub width: usize,
    /// Row-major `|H(f)|` (or `ln(1+|H|)` when `log_scaled`), DC at (0,0).
    pub magnitude: Vec<f64>,
    pub log_scaled: bool,
}

impl SpectrumImage {
    /// DC (zero-frequency) magnitude, undoing log scaling if applied.
    pub fn dc_magnitude(&self) -> f64 {
        if self.log_scaled {
            self.magnitude[0].exp() - 1.0
        } else {
            self.magnitude[0]
        }
    }

    /// 8-bit grayscale PNG with the DC bin shifted to the image center and
    /// magnitudes normalized by the maximum.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let max = self.magnitude.iter().cloned().fold(f64::MIN, f64::max).max(1e-300);
        let mut shifted = vec![0.0; self.magnitude.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let sy = (y + self.height / 2) % self.height;
                let sx = (x + self.width / 2) % self.width;
                shifted[sy * self.width + sx] = self.magnitude[y * self.width + x] / max;
            }
        }
        ImageTensor::new(self.height, self.width, 1, shifted)?.save_png(path)
    }
}

/// 2-D DFT magnitude of the zero-padded, center-shifted kernel. The DC bin
/// equals the kernel sum (1 for any valid [`BlurKernel`]).
pub fn kernel_spectrum(
    kernel: &BlurKernel,
    target_size: (usize, usize),
    log_scaled: bool,
) -> Result<SpectrumImage> {
    let (h, w) = target_size;
    if h < kernel.size() || w < kernel.size() {
        return Err(Error::Parameter(format!(
            "spectrum grid {h}x{w} smaller than kernel {}",
            kernel.size()
        )));
    }
    let otf = fft::kernel_otf(kernel.values(), kernel.size(), h, w);
    let magnitude = otf
        .iter()
        .map(|c| {
            let m = c.norm();
            if log_scaled {
                (1.0 + m).ln()
            } else {
                m
            }
        })
        .collect();
    Ok(SpectrumImage {
        height: h,
        width: w,
        magnitude,
        log_scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_kernel_angle_zero_is_a_symmetric_center_row() {
        let k = generate_linear_kernel(13, 0.0, 5.0, 0).unwrap();
        let c = 6;
        for (i, row) in k.values().chunks_exact(13).enumerate() {
            let mass: f64 = row.iter().sum();
            if i == c {
                assert!((mass - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(mass, 0.0, "row {i} should be empty");
            }
        }
        // symmetric about the center column
        let row = &k.values()[c * 13..(c + 1) * 13];
        for j in 0..13 {
            assert!((row[j] - row[12 - j]).abs() < 1e-12);
        }
    }

    #[test]
    fn length_one_is_a_delta() {
        let k = generate_linear_kernel(9, 30.0, 1.0, 0).unwrap();
        let mut expected = vec![0.0; 81];
        expected[4 * 9 + 4] = 1.0;
        assert_eq!(k.values(), &expected[..]);
    }

    #[test]
    fn linear_kernel_rejects_bad_parameters() {
        assert!(generate_linear_kernel(8, 0.0, 3.0, 0).is_err());
        assert!(generate_linear_kernel(9, 0.0, 10.0, 0).is_err());
        assert!(generate_linear_kernel(9, 0.0, 0.5, 0).is_err());
    }

    #[test]
    fn trajectory_is_seed_deterministic_and_normalized() {
        for seed in 0..100 {
            let a = generate_trajectory_kernel(15, seed, 0.5).unwrap();
            let b = generate_trajectory_kernel(15, seed, 0.5).unwrap();
            assert_eq!(a.values(), b.values());
            assert!((a.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_jitter_degenerates_to_the_straight_streak() {
        for seed in [1u64, 7, 42] {
            let t = generate_trajectory_kernel(17, seed, 0.0).unwrap();
            let line = generate_linear_kernel(17, t.meta().angle_degrees, t.meta().length_px, seed)
                .unwrap();
            assert_eq!(t.values(), line.values());
        }
    }

    #[test]
    fn delta_blur_is_identity_and_constant_stays_constant() {
        let img = crate::fixtures::text_like_image(3, 32, 32, 3);
        let delta = BlurKernel::delta(5).unwrap();
        let out = apply_blur(&img, &DegradationConfig::noiseless(delta)).unwrap();
        assert_eq!(out.data(), img.data());

        let flat = ImageTensor::constant(24, 24, 1, 0.42).unwrap();
        let k = generate_linear_kernel(7, 25.0, 5.0, 0).unwrap();
        let out = apply_blur(&flat, &DegradationConfig::noiseless(k)).unwrap();
        for v in out.data() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_blur_matches_fft_oracle() {
        // independent route: pointwise product of spectra, inverted
        let img = crate::fixtures::text_like_image(11, 24, 20, 1);
        let kernel = generate_trajectory_kernel(9, 5, 0.6).unwrap();
        let spatial = apply_blur(&img, &DegradationConfig::noiseless(kernel.clone())).unwrap();
        let otf = fft::kernel_otf(kernel.values(), 9, 24, 20);
        let mut spec = fft::fft2(&img.channel_plane(0), 24, 20);
        for (s, o) in spec.iter_mut().zip(&otf) {
            *s *= o;
        }
        let oracle = fft::ifft2_real(&spec, 24, 20);
        for (a, b) in spatial.data().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "spatial {a} vs fft {b}");
        }
    }

    #[test]
    fn circular_blur_preserves_mean_energy() {
        let img = crate::fixtures::text_like_image(21, 32, 32, 3);
        let kernel = generate_linear_kernel(9, 72.0, 7.0, 0).unwrap();
        let out = apply_blur(&img, &DegradationConfig::noiseless(kernel)).unwrap();
        assert!((out.mean() - img.mean()).abs() < 1e-9);
    }

    #[test]
    fn blur_commutes_with_constant_offset() {
        let base = crate::fixtures::text_like_image(2, 16, 16, 1);
        // keep intensities away from the clamp so the offset stays linear
        let mut scaled = base.clone();
        for v in scaled.data_mut() {
            *v = 0.2 + 0.4 * *v;
        }
        let mut offset = scaled.clone();
        for v in offset.data_mut() {
            *v += 0.15;
        }
        let k = generate_trajectory_kernel(7, 9, 0.4).unwrap();
        let a = apply_blur(&scaled, &DegradationConfig::noiseless(k.clone())).unwrap();
        let b = apply_blur(&offset, &DegradationConfig::noiseless(k)).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((y - x - 0.15).abs() < 1e-9);
        }
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let img = ImageTensor::constant(8, 8, 1, 0.5).unwrap();
        let k = generate_linear_kernel(11, 0.0, 5.0, 0).unwrap();
        assert!(apply_blur(&img, &DegradationConfig::noiseless(k)).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let img = ImageTensor::constant(16, 16, 1, 0.5).unwrap();
        let k = BlurKernel::delta(3).unwrap();
        let cfg = DegradationConfig {
            kernel: k,
            noise_sigma: 0.05,
            boundary: Boundary::Circular,
            rng_seed: 77,
        };
        let a = apply_blur(&img, &cfg).unwrap();
        let b = apply_blur(&img, &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().any(|&v| (v - 0.5).abs() > 1e-4));
    }

    #[test]
    fn delta_spectrum_is_flat_and_normalized_spectra_are_bounded() {
        let delta = BlurKernel::delta(5).unwrap();
        let spec = kernel_spectrum(&delta, (16, 16), false).unwrap();
        for v in &spec.magnitude {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for seed in 0..20 {
            let k = generate_trajectory_kernel(11, seed, 0.7).unwrap();
            let s = kernel_spectrum(&k, (32, 32), false).unwrap();
            assert!((s.dc_magnitude() - 1.0).abs() < 1e-9);
            assert!(s.magnitude.iter().all(|&m| m <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn box_kernel_spectrum_matches_dirichlet_closed_form() {
        // horizontal box of length L: |H(f)| = |sin(pi f L) / (L sin(pi f))|
        let size = 9;
        let l = 5usize;
        let mut values = vec![0.0; size * size];
        let c = size / 2;
        for j in 0..l {
            values[c * size + c - l / 2 + j] = 1.0 / l as f64;
        }
        let meta = KernelMeta {
            kind: KernelKind::Linear,
            angle_degrees: 0.0,
            length_px: l as f64,
            seed: 0,
        };
        let kernel = BlurKernel::from_values(size, values, meta).unwrap();
        let n = 40usize;
        let spec = kernel_spectrum(&kernel, (n, n), false).unwrap();
        for m in 0..n {
            let f = m as f64 / n as f64;
            let expected = if m == 0 {
                1.0
            } else {
                ((std::f64::consts::PI * f * l as f64).sin()
                    / (l as f64 * (std::f64::consts::PI * f).sin()))
                .abs()
            };
            let got = spec.magnitude[m]; // row 0 = zero vertical frequency
            assert!(
                (got - expected).abs() < 1e-9,
                "bin {m}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn psf_file_round_trips_exactly() {
        let dir = std::env::temp_dir().join("deblur_core_psf_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("k.psf");
        let k = generate_trajectory_kernel(13, 99, 0.8).unwrap();
        k.write_psf(&path).unwrap();
        let back = BlurKernel::read_psf(&path).unwrap();
        assert_eq!(k.values(), back.values());

        // a corrupted kernel must be rejected on load
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut bad = lines.clone();
        let tampered = format!("{} 0.5", lines[1]);
        bad[1] = &tampered;
        std::fs::write(&path, bad.join("\n")).unwrap();
        assert!(BlurKernel::read_psf(&path).is_err());
    }
}
