//! Wiener deconvolution with a scalar noise-to-signal ratio.

use super::{spectral_per_channel, DeconvMethod, DeconvRequest};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// `X(f) = Y(f)·conj(H)/(|H|² + nsr)` per channel. `nsr = 0` reduces to the
/// inverse filter with a zero floor (pseudo-inverse at exact zeros).
pub struct WienerFilter;

impl DeconvMethod for WienerFilter {
    fn name(&self) -> &'static str {
        "wiener"
    }

    fn describe(&self) -> &'static str {
        "spectral inversion balanced against noise via the scalar `nsr`"
    }

    fn run(&self, request: &DeconvRequest) -> Result<ImageTensor> {
        let nsr = request.params.nsr;
        if nsr < 0.0 || !nsr.is_finite() {
            return Err(Error::Parameter(format!(
                "wiener nsr must be finite and >= 0, got {nsr}"
            )));
        }
        spectral_per_channel(request, |spectrum, otf| {
            spectrum
                .iter()
                .zip(otf)
                .map(|(y, h)| {
                    let denom = h.norm_sqr() + nsr;
                    if denom == 0.0 {
                        Default::default()
                    } else {
                        y * h.conj() / denom
                    }
                })
                .collect()
        })
    }
}
