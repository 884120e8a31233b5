//! Richardson–Lucy multiplicative deconvolution.

use super::{convolve_plane, correlate_plane, DeconvMethod, DeconvRequest};
use crate::error::{Error, Result};
use crate::fft;
use crate::image::ImageTensor;

const FLOOR: f64 = 1e-12;

/// Multiplicative updates `x ← x ⊙ (kᵀ ∗ (y / (k ∗ x)))`, initialized at
/// `x = y`, circular boundary. With a normalized kernel this conserves the
/// total flux `sum(x)` at every iteration.
pub struct RichardsonLucy;

impl DeconvMethod for RichardsonLucy {
    fn name(&self) -> &'static str {
        "richardson_lucy"
    }

    fn describe(&self) -> &'static str {
        "multiplicative flux-conserving updates; reads `iterations`"
    }

    fn run(&self, request: &DeconvRequest) -> Result<ImageTensor> {
        Ok(richardson_lucy_trace(request)?.0)
    }
}

/// Full solver exposing the per-iteration flux `sum(x_t)`, including the
/// initial state; `trace.len() == iterations + 1`.
pub fn richardson_lucy_trace(request: &DeconvRequest) -> Result<(ImageTensor, Vec<f64>)> {
    let iterations = request.params.iterations;
    if iterations == 0 {
        return Err(Error::Parameter("richardson_lucy needs iterations >= 1".into()));
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

    let mut planes: Vec<Vec<f64>> = (0..img.channels())
        .map(|c| {
            img.channel_plane(c)
                .into_iter()
                .map(|v| v.max(FLOOR))
                .collect()
        })
        .collect();
    let observed = planes.clone();

    let flux = |ps: &[Vec<f64>]| ps.iter().flatten().sum::<f64>();
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(flux(&planes));

    for _ in 0..iterations {
        for (plane, obs) in planes.iter_mut().zip(&observed) {
            let predicted = convolve_plane(plane, &otf, h, w);
            // the prediction is a convex combination of floored positives,
            // so only FFT rounding can push it under the floor
            let ratio: Vec<f64> = obs
                .iter()
                .zip(&predicted)
                .map(|(y, p)| {
                    if !p.is_finite() {
                        return Err(Error::Numeric(
                            "richardson_lucy: non-finite predicted intensity".into(),
                        ));
                    }
                    Ok(y / p.max(FLOOR))
                })
                .collect::<Result<_>>()?;
            let correction = correlate_plane(&ratio, &otf, h, w);
            for (x, c) in plane.iter_mut().zip(&correction) {
                *x *= c;
            }
        }
        trace.push(flux(&planes));
    }
    let out = ImageTensor::from_planes(h, w, &planes)?.clamp_unit();
    Ok((out, trace))
}
