//! Direct spectral inversion with an optional Tikhonov-style floor.

use super::{spectral_per_channel, DeconvMethod, DeconvRequest};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// `X(f) = Y(f)·conj(H)/(|H|² + epsilon)` per channel.
///
/// With `epsilon = 0` exact spectral zeros fall back to the pseudo-inverse:
/// those frequencies are unrecoverable and are set to zero instead of
/// producing non-finite values.
pub struct InverseFilter;

impl DeconvMethod for InverseFilter {
    fn name(&self) -> &'static str {
        "inverse"
    }

    fn describe(&self) -> &'static str {
        "direct spectral inversion; `epsilon` regularizes near-zero frequencies"
    }

    fn run(&self, request: &DeconvRequest) -> Result<ImageTensor> {
        let epsilon = request.params.epsilon;
        if epsilon < 0.0 || !epsilon.is_finite() {
            return Err(Error::Parameter(format!(
                "inverse filter epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        spectral_per_channel(request, |spectrum, otf| {
            spectrum
                .iter()
                .zip(otf)
                .map(|(y, h)| {
                    let denom = h.norm_sqr() + epsilon;
                    if denom == 0.0 {
                        // pseudo-inverse: the frequency carries no signal
                        Default::default()
                    } else {
                        y * h.conj() / denom
                    }
                })
                .collect()
        })
    }
}
