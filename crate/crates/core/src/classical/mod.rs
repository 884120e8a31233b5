//! Non-blind deconvolution baselines behind a name-keyed registry.
//!
//! Every method implements [`DeconvMethod`] and is selected at runtime by
//! name (the CLI's `--method` flag). All methods assume circular boundaries
//! so frequency-domain algebra is exact, and all are deterministic.
//!
//! Tikhonov-style regularization is not a separate entry: it is exactly the
//! `epsilon` term in the inverse filter's denominator.

mod inverse;
mod landweber;
mod richardson_lucy;
mod tv;
mod wiener;

pub use inverse::InverseFilter;
pub use landweber::{landweber_trace, Landweber};
pub use richardson_lucy::{richardson_lucy_trace, RichardsonLucy};
pub use tv::{tv_trace, TvDeblur};
pub use wiener::WienerFilter;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::image::ImageTensor;
use crate::psf::BlurKernel;

/// Method-specific knobs; each strategy documents which fields it reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvParams {
    /// Spectral floor of the inverse filter.
    pub epsilon: f64,
    /// Noise-to-signal power ratio of the Wiener filter.
    pub nsr: f64,
    /// Iteration budget of the iterative methods.
    pub iterations: usize,
    /// Landweber step size, in (0, 2).
    pub tau: f64,
    /// Total-variation weight.
    pub lambda: f64,
    /// Initial gradient-descent step of the TV solver.
    pub step: f64,
}

impl Default for DeconvParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            nsr: 1e-6,
            iterations: 50,
            tau: 1.0,
            lambda: 1e-3,
            step: 1.0,
        }
    }
}

/// A deconvolution job: blurred observation plus the known kernel.
/// Boundary handling is always circular.
#[derive(Debug, Clone)]
pub struct DeconvRequest {
    pub blurred: ImageTensor,
    pub kernel: BlurKernel,
    pub params: DeconvParams,
}

impl DeconvRequest {
    pub fn new(blurred: ImageTensor, kernel: BlurKernel) -> Self {
        Self {
            blurred,
            kernel,
            params: DeconvParams::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.kernel.size();
        if k > self.blurred.height() || k > self.blurred.width() {
            return Err(Error::Parameter(format!(
                "kernel {k}x{k} does not fit inside {}x{} image",
                self.blurred.height(),
                self.blurred.width()
            )));
        }
        Ok(())
    }
}

/// One interchangeable deconvolution strategy.
pub trait DeconvMethod {
    /// Registry key (CLI `--method` value).
    fn name(&self) -> &'static str;
    /// One-line description for help output.
    fn describe(&self) -> &'static str;
    fn run(&self, request: &DeconvRequest) -> Result<ImageTensor>;
}

/// All registered strategies, in presentation order.
pub fn registry() -> Vec<Box<dyn DeconvMethod>> {
    vec![
        Box::new(InverseFilter),
        Box::new(WienerFilter),
        Box::new(RichardsonLucy),
        Box::new(Landweber),
        Box::new(TvDeblur),
    ]
}

/// Look a strategy up by its registry key.
pub fn find_method(name: &str) -> Result<Box<dyn DeconvMethod>> {
    registry()
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = registry().iter().map(|m| m.name()).collect();
            Error::Parameter(format!(
                "unknown deconvolution method '{name}' (expected one of {})",
                known.join(", ")
            ))
        })
}

// ---------------------------------------------------------------------------
// Shared frequency-domain plumbing
// ---------------------------------------------------------------------------

/// Per-channel spectral processing: `f` maps (channel spectrum, OTF) to the
/// restored channel spectrum. Output is clamped to [0, 1].
pub(crate) fn spectral_per_channel<F>(request: &DeconvRequest, f: F) -> Result<ImageTensor>
where
    F: Fn(&[Complex<f64>], &[Complex<f64>]) -> Vec<Complex<f64>>,
{
    request.validate()?;
    let img = &request.blurred;
    let (h, w) = (img.height(), img.width());
    let otf = fft::kernel_otf(request.kernel.values(), request.kernel.size(), h, w);
    let mut planes = Vec::with_capacity(img.channels());
    for c in 0..img.channels() {
        let spectrum = fft::fft2(&img.channel_plane(c), h, w);
        let restored = f(&spectrum, &otf);
        planes.push(fft::ifft2_real(&restored, h, w));
    }
    Ok(ImageTensor::from_planes(h, w, &planes)?.clamp_unit())
}

/// Circular convolution of one plane with a precomputed OTF.
pub(crate) fn convolve_plane(
    plane: &[f64],
    otf: &[Complex<f64>],
    h: usize,
    w: usize,
) -> Vec<f64> {
    let mut spec = fft::fft2(plane, h, w);
    for (s, o) in spec.iter_mut().zip(otf) {
        *s *= *o;
    }
    fft::ifft2_real(&spec, h, w)
}

/// Circular correlation (adjoint blur): convolution with the flipped
/// kernel, i.e. multiplication by the conjugate OTF.
pub(crate) fn correlate_plane(
    plane: &[f64],
    otf: &[Complex<f64>],
    h: usize,
    w: usize,
) -> Vec<f64> {
    let mut spec = fft::fft2(plane, h, w);
    for (s, o) in spec.iter_mut().zip(otf) {
        *s *= o.conj();
    }
    fft::ifft2_real(&spec, h, w)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_resolvable() {
        let names: Vec<&str> = registry().iter().map(|m| m.name()).collect();
        assert_eq!(names, vec!["inverse", "wiener", "richardson_lucy", "landweber", "tv"]);
        for name in names {
            assert_eq!(find_method(name).unwrap().name(), name);
        }
        assert!(find_method("blind").is_err());
    }

    #[test]
    fn oversized_kernels_are_rejected_uniformly() {
        let img = ImageTensor::constant(8, 8, 1, 0.5).unwrap();
        let kernel = crate::psf::generate_linear_kernel(11, 0.0, 3.0, 0).unwrap();
        for method in registry() {
            let req = DeconvRequest::new(img.clone(), kernel.clone());
            assert!(method.run(&req).is_err(), "{} accepted oversized kernel", method.name());
        }
    }

    #[test]
    fn outputs_preserve_shape_and_range() {
        let kernel = test_support::mild_linear_kernel();
        let (blurred, _) = test_support::blurred_fixture(4, 24, &kernel);
        for method in registry() {
            let mut req = DeconvRequest::new(blurred.clone(), kernel.clone());
            req.params.iterations = 5;
            let out = method.run(&req).unwrap();
            assert_eq!(out.height(), 24);
            assert_eq!(out.width(), 24);
            assert_eq!(out.channels(), 1);
            assert!(out.min() >= 0.0 && out.max() <= 1.0, "{}", method.name());
        }
    }
}
