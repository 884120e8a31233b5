//! Landweber iteration: gradient descent on the data-fidelity term.

use super::{convolve_plane, correlate_plane, DeconvMethod, DeconvRequest};
use crate::error::{Error, Result};
use crate::fft;
use crate::image::ImageTensor;

/// `x ← x + tau·kᵀ∗(y − k∗x)`, initialized at `y`. For a normalized kernel
/// the operator norm is 1, so the residual `‖k∗x − y‖²` is non-increasing
/// for any `tau` in (0, 2).
pub struct Landweber;

impl DeconvMethod for Landweber {
    fn name(&self) -> &'static str {
        "landweber"
    }

    fn describe(&self) -> &'static str {
        "gradient descent on ‖k∗x − y‖²; reads `iterations` and `tau`"
    }

    fn run(&self, request: &DeconvRequest) -> Result<ImageTensor> {
        Ok(landweber_trace(request)?.0)
    }
}

/// Full solver exposing the squared residual after every iteration,
/// including the initial state; `trace.len() == iterations + 1`.
pub fn landweber_trace(request: &DeconvRequest) -> Result<(ImageTensor, Vec<f64>)> {
    let iterations = request.params.iterations;
    let tau = request.params.tau;
    if iterations == 0 {
        return Err(Error::Parameter("landweber needs iterations >= 1".into()));
    }
    if !(tau > 0.0 && tau < 2.0) {
        return Err(Error::Parameter(format!(
            "landweber step tau must lie in (0, 2), got {tau}"
        )));
    }
    let img = &request.blurred;
    let k = request.kernel.size();
    let (h, w) = (img.height(), img.width());
    if k > h || k > w {
        return Err(Error::Parameter(format!(
            "kernel {k}x{k} does not fit inside {h}x{w} image"
        )));
    }
    let otf = fft::kernel_otf(request.kernel.values(), k, h, w);

    let observed: Vec<Vec<f64>> = (0..img.channels()).map(|c| img.channel_plane(c)).collect();
    let mut planes = observed.clone();

    let residual_norm = |ps: &[Vec<f64>]| -> f64 {
        ps.iter()
            .zip(&observed)
            .map(|(x, y)| {
                let kx = convolve_plane(x, &otf, h, w);
                kx.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum()
    };

    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(residual_norm(&planes));
    for _ in 0..iterations {
        for (plane, obs) in planes.iter_mut().zip(&observed) {
            let kx = convolve_plane(plane, &otf, h, w);
            let residual: Vec<f64> = obs.iter().zip(&kx).map(|(y, p)| y - p).collect();
            let update = correlate_plane(&residual, &otf, h, w);
            for (x, u) in plane.iter_mut().zip(&update) {
                *x += tau * u;
            }
        }
        trace.push(residual_norm(&planes));
    }
    let out = ImageTensor::from_planes(h, w, &planes)?.clamp_unit();
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::mild_linear_kernel;
    use super::*;
    use crate::psf::{apply_blur, BlurKernel, DegradationConfig};

    #[test]
    fn delta_kernel_starts_at_the_fixed_point() {
        let img = crate::fixtures::text_like_image(41, 24, 24, 1);
        let mut req = DeconvRequest::new(img.clone(), BlurKernel::delta(3).unwrap());
        req.params.iterations = 3;
        req.params.tau = 1.0;
        let (out, trace) = landweber_trace(&req).unwrap();
        assert!(trace.iter().all(|&r| r < 1e-20), "residuals {trace:?}");
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_is_monotone_nonincreasing_for_valid_tau() {
        let kernel = mild_linear_kernel();
        let sharp = crate::fixtures::text_like_image(42, 40, 40, 1);
        let blurred = apply_blur(&sharp, &DegradationConfig::noiseless(kernel.clone())).unwrap();
        let mut req = DeconvRequest::new(blurred, kernel);
        req.params.iterations = 100;
        req.params.tau = 1.0;
        let (_, trace) = landweber_trace(&req).unwrap();
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-15,
                "residual rose: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn out_of_range_tau_is_rejected() {
        let img = ImageTensor::constant(8, 8, 1, 0.5).unwrap();
        for tau in [0.0, -1.0, 2.0, 2.5] {
            let mut req = DeconvRequest::new(img.clone(), BlurKernel::delta(3).unwrap());
            req.params.tau = tau;
            assert!(Landweber.run(&req).is_err(), "tau {tau} accepted");
        }
    }
}
