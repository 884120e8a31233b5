//! 2-D FFT helpers on row-major real planes.
//!
//! Everything here assumes circular (periodic) boundaries, which makes
//! spatial convolution exactly equal to pointwise spectral multiplication
//! and is what the frequency-domain solvers in [`crate::classical`] rely on.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Forward 2-D DFT of a real H×W plane (unnormalized).
pub fn fft2(plane: &[f64], height: usize, width: usize) -> Vec<Complex<f64>> {
    assert_eq!(plane.len(), height * width, "fft2 plane size");
    let mut data: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2_in_place(&mut data, height, width, false);
    data
}

/// Inverse 2-D DFT, normalized by `1/(H*W)`.
pub fn ifft2(spectrum: &[Complex<f64>], height: usize, width: usize) -> Vec<Complex<f64>> {
    assert_eq!(spectrum.len(), height * width, "ifft2 spectrum size");
    let mut data = spectrum.to_vec();
    fft2_in_place(&mut data, height, width, true);
    let norm = 1.0 / (height * width) as f64;
    for v in &mut data {
        *v *= norm;
    }
    data
}

/// Inverse 2-D DFT keeping only the real part.
pub fn ifft2_real(spectrum: &[Complex<f64>], height: usize, width: usize) -> Vec<f64> {
    ifft2(spectrum, height, width).into_iter().map(|c| c.re).collect()
}

fn fft2_in_place(data: &mut [Complex<f64>], height: usize, width: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = data[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            data[y * width + x] = col[y];
        }
    }
}

/// Optical transfer function of a centered odd-sized kernel on an H×W grid:
/// the kernel is embedded with its center at the origin (wrap-around), then
/// transformed. With this layout, circular convolution of an image with the
/// centered kernel is exactly `ifft2(fft2(image) .* otf)`.
pub fn kernel_otf(kernel: &[f64], ksize: usize, height: usize, width: usize) -> Vec<Complex<f64>> {
    assert_eq!(kernel.len(), ksize * ksize, "kernel buffer size");
    assert!(ksize <= height && ksize <= width, "kernel exceeds grid");
    let c = (ksize / 2) as isize;
    let mut plane = vec![0.0; height * width];
    for i in 0..ksize {
        for j in 0..ksize {
            let y = (i as isize - c).rem_euclid(height as isize) as usize;
            let x = (j as isize - c).rem_euclid(width as isize) as usize;
            plane[y * width + x] = kernel[i * ksize + j];
        }
    }
    fft2(&plane, height, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recovers_input() {
        let plane: Vec<f64> = (0..6 * 5).map(|i| (i as f64 * 0.37).sin()).collect();
        let spec = fft2(&plane, 6, 5);
        let back = ifft2_real(&spec, 6, 5);
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_has_flat_unit_otf() {
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let otf = kernel_otf(&kernel, 3, 8, 8);
        for v in otf {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_energy_matches() {
        let plane: Vec<f64> = (0..8 * 8).map(|i| ((i * 7 % 13) as f64) / 13.0).collect();
        let spec = fft2(&plane, 8, 8);
        let spatial: f64 = plane.iter().map(|v| v * v).sum();
        let spectral: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / 64.0;
        assert!((spatial - spectral).abs() < 1e-9);
    }
}
