//! Desk-scale motion-deblurring laboratory.
//!
//! The crate is organized around the degradation model `y = x * k + n`:
//! [`psf`] generates blur kernels and applies the model, [`classical`]
//! inverts it with non-blind deconvolution baselines, and [`model`] learns
//! the inverse with a hybrid CNN-ViT network built on the [`tensor`]
//! autodiff engine. [`metrics`] and [`loss`] score restorations and drive
//! training, [`pipeline`] owns datasets, the training loop, checkpoints,
//! and evaluation reports.

pub mod classical;
pub mod error;
pub mod fft;
pub mod fixtures;
pub mod gradcheck;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod psf;
pub mod seeds;
pub mod tensor;

pub use error::{Error, Result};
pub use image::ImageTensor;
