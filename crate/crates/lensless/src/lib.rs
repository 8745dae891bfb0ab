//! Simulation and reconstruction toolkit for mask-based lensless cameras.
//!
//! A lensless camera replaces the lens with an amplitude or phase mask
//! placed close to the sensor, so measurements are globally multiplexed
//! rather than focused images. This crate provides, at desk scale:
//!
//! - forward models: general linear, separable (`Y = Phi_L X Phi_R^T`),
//!   convolutional (`Y = P * X`), and cropped-convolutional (`Y = C(P * X)`);
//! - optics simulation: Fresnel-propagated phase-mask PSFs and synthetic
//!   separable calibration matrices;
//! - classical baselines: closed-form separable Tikhonov, Wiener
//!   deconvolution, and TV-regularized ADMM;
//! - a trainable camera-inversion stage with calibrated and uncalibrated
//!   initializations, a small convolutional enhancer, analytic gradients,
//!   and an Adam training loop;
//! - losses and metrics (MSE, weighted combinations, contextual loss,
//!   PSNR, SSIM), binary tensor / PNG serialization, and a CLI.
//!
//! Start with the runnable programs under `examples/` — each one walks
//! through a major capability end to end.

pub mod classic;
pub mod cli;
pub mod crop_study;
pub mod error;
pub mod flatnet;
pub mod forward;
pub mod init;
pub mod io;
pub mod losses;
pub mod optics;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
