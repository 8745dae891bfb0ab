//! Trainable camera inversion: the learned first stage that maps lensless
//! measurements back to image space, plus the small convolutional
//! enhancer, analytic gradients, the Adam training loop, and the
//! inversion-evolution diagnostics.
//!
//! Two inversion families exist. The separable one applies a learned
//! matrix pair, `X = f(W1 Y W2)`, acting directly on 2-D measurements.
//! The general (convolutional) one applies a learned filter as a Hadamard
//! product in the Fourier domain, `X = F^-1(F(W) . F(Y))`, with an
//! optional replicate-pad-and-window preprocessing step for measurements
//! cropped by a small sensor.

mod adam;
mod backward;
mod diagnose;
mod enhancer;
mod train;

pub use adam::{adam_step, AdamOptimizer, AdamState};
pub use backward::{backward, Gradients, Tape};
pub use diagnose::{diagnose_gen, diagnose_sep, GenDiagnosis, SepDiagnosis};
pub use enhancer::{enhance, ConvLayer, EnhancerWeights};
pub use train::{mean_test_psnr, train, Dataset, LossTerm, Model, Sample, TrainResult};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::mat::channel_to_matrix;
use crate::tensor::{
    centered_offset, crop_center, fft2, hadamard, ifft2, leaky_relu, pad_replicate,
    smoothed_box_window, Tensor,
};

/// Learned parameters of the separable inversion: `X = f(W1 Y W2)`
/// followed by a 1x1 channel mix to RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct SepInversionWeights {
    /// recon_rows x sensor_rows.
    pub w1: DMatrix<f64>,
    /// sensor_cols x recon_cols.
    pub w2: DMatrix<f64>,
    /// 3 x in_channels.
    pub channel_mix: DMatrix<f64>,
}

impl SepInversionWeights {
    pub fn new(w1: DMatrix<f64>, w2: DMatrix<f64>, channel_mix: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("w1", &w1), ("w2", &w2), ("channel_mix", &channel_mix)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("{name} contains non-finite entries")));
            }
        }
        if channel_mix.nrows() != 3 {
            return Err(Error::invalid("channel mix must have 3 output rows"));
        }
        Ok(SepInversionWeights { w1, w2, channel_mix })
    }
}

/// Learned parameters of the general inversion: a spatial filter applied
/// in the Fourier domain at the (padded) measurement dims.
#[derive(Debug, Clone, PartialEq)]
pub struct GenInversionWeights {
    /// Padded-measurement dims, 1 channel.
    pub w: Tensor,
    /// 3 x in_channels.
    pub channel_mix: DMatrix<f64>,
}

impl GenInversionWeights {
    pub fn new(w: Tensor, channel_mix: DMatrix<f64>) -> Result<Self> {
        if w.channels() != 1 {
            return Err(Error::invalid("inversion filter must have one channel"));
        }
        if channel_mix.nrows() != 3 {
            return Err(Error::invalid("channel mix must have 3 output rows"));
        }
        if channel_mix.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("channel mix contains non-finite entries"));
        }
        Ok(GenInversionWeights { w, channel_mix })
    }
}

/// The initial 1x1 channel mapping into RGB: identity for 3-channel
/// input, `[R; (Gr+Gb)/2; B]` for 4-channel Bayer input, gray replication
/// for 1-channel input.
pub fn default_channel_mix(in_channels: usize) -> Result<DMatrix<f64>> {
    match in_channels {
        1 => Ok(DMatrix::from_element(3, 1, 1.0)),
        3 => Ok(DMatrix::identity(3, 3)),
        4 => Ok(DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.5, 0.5, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        )),
        other => Err(Error::invalid(format!(
            "no default channel mix for {other} input channels"
        ))),
    }
}

/// Applies a `rows x channels` mix across the channel axis.
pub(crate) fn apply_channel_mix(mix: &DMatrix<f64>, t: &Tensor) -> Result<Tensor> {
    if mix.ncols() != t.channels() {
        return Err(Error::invalid(format!(
            "channel mix expects {} channels, input has {}",
            mix.ncols(),
            t.channels()
        )));
    }
    Tensor::from_fn(t.height(), t.width(), mix.nrows(), |r, c, out_ch| {
        (0..t.channels()).map(|ch| mix[(out_ch, ch)] * t.get(r, c, ch)).sum()
    })
}

/// Separable inversion: per-channel `W1 Y W2`, leaky ReLU with the given
/// negative slope, then the channel mix to 3 channels.
pub fn invert_sep(weights: &SepInversionWeights, y: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(invert_sep_with_tape(weights, y, slope)?.0)
}

pub(crate) struct SepTape {
    pub(crate) yw2: Vec<DMatrix<f64>>,
    pub(crate) w1y: Vec<DMatrix<f64>>,
    pub(crate) pre: Tensor,
    pub(crate) activated: Tensor,
    pub(crate) slope: f64,
}

pub(crate) fn invert_sep_with_tape(
    weights: &SepInversionWeights,
    y: &Tensor,
    slope: f64,
) -> Result<(Tensor, SepTape)> {
    let (sr, sc) = y.dims();
    if weights.w1.ncols() != sr || weights.w2.nrows() != sc {
        return Err(Error::invalid(format!(
            "measurement {sr}x{sc} incompatible with W1 ({}x{}) / W2 ({}x{})",
            weights.w1.nrows(),
            weights.w1.ncols(),
            weights.w2.nrows(),
            weights.w2.ncols()
        )));
    }
    let mut yw2 = Vec::with_capacity(y.channels());
    let mut w1y = Vec::with_capacity(y.channels());
    let mut pre_planes = Vec::with_capacity(y.channels());
    for ch in 0..y.channels() {
        let yc = channel_to_matrix(y, ch)?;
        let right = &yc * &weights.w2;
        let left = &weights.w1 * &yc;
        let pre = &weights.w1 * &right;
        yw2.push(right);
        w1y.push(left);
        pre_planes.push(crate::tensor::mat::matrix_to_tensor(&pre)?);
    }
    let pre = Tensor::stack_channels(
        &pre_planes.iter().map(|p| p.channel(0)).collect::<Result<Vec<_>>>()?,
    )?;
    let activated = leaky_relu(&pre, slope)?;
    let out = apply_channel_mix(&weights.channel_mix, &activated)?;
    Ok((out, SepTape { yw2, w1y, pre, activated, slope }))
}

/// Replicate-pads a cropped measurement to `target` dims (centered) and
/// tapers it with the smoothed box window so the padded extension fades
/// smoothly instead of introducing hard edges.
pub fn pad_and_window(y: &Tensor, target_h: usize, target_w: usize, sigma: f64) -> Result<Tensor> {
    let (h, w) = y.dims();
    if target_h < h || target_w < w {
        return Err(Error::invalid(format!(
            "pad target {target_h}x{target_w} smaller than measurement {h}x{w}"
        )));
    }
    let top = centered_offset(target_h, h);
    let left = centered_offset(target_w, w);
    let padded = pad_replicate(y, top, target_h - h - top, left, target_w - w - left);
    let window = smoothed_box_window(target_h, target_w, h, w, sigma)?;
    padded.zip_map_broadcast(&window, |a, b| a * b)
}

/// General inversion: per-channel circular deconvolution by the learned
/// filter in the Fourier domain, center-cropped to the reconstruction
/// dims, then the channel mix. No pointwise nonlinearity. When `cropped`
/// is set the measurement is first passed through [`pad_and_window`] with
/// the given window sigma.
pub fn invert_gen(
    weights: &GenInversionWeights,
    y: &Tensor,
    recon_rows: usize,
    recon_cols: usize,
    cropped: bool,
    sigma: f64,
) -> Result<Tensor> {
    Ok(invert_gen_with_tape(weights, y, recon_rows, recon_cols, cropped, sigma)?.0)
}

pub(crate) struct GenTape {
    pub(crate) y_spectra: Vec<crate::tensor::ComplexSpectrum>,
    pub(crate) cropped_planes: Tensor,
    pub(crate) recon_rows: usize,
    pub(crate) recon_cols: usize,
}

pub(crate) fn invert_gen_with_tape(
    weights: &GenInversionWeights,
    y: &Tensor,
    recon_rows: usize,
    recon_cols: usize,
    cropped: bool,
    sigma: f64,
) -> Result<(Tensor, GenTape)> {
    let (wh, ww) = weights.w.dims();
    let y_eff = if cropped { pad_and_window(y, wh, ww, sigma)? } else { y.clone() };
    if y_eff.dims() != (wh, ww) {
        return Err(Error::invalid(format!(
            "measurement dims {:?} do not match filter dims ({wh}, {ww})",
            y_eff.dims()
        )));
    }
    if recon_rows > wh || recon_cols > ww {
        return Err(Error::invalid("reconstruction dims exceed filter dims"));
    }
    let w_spec = fft2(&weights.w)?;
    let mut y_spectra = Vec::with_capacity(y_eff.channels());
    let mut planes = Vec::with_capacity(y_eff.channels());
    for ch in 0..y_eff.channels() {
        let ys = fft2(&y_eff.channel(ch)?)?;
        let full = ifft2(&hadamard(&ys, &w_spec)?)?;
        planes.push(crop_center(&full, recon_rows, recon_cols)?);
        y_spectra.push(ys);
    }
    let cropped_planes = Tensor::stack_channels(&planes)?;
    let out = apply_channel_mix(&weights.channel_mix, &cropped_planes)?;
    Ok((out, GenTape { y_spectra, cropped_planes, recon_rows, recon_cols }))
}

/// Training hyperparameters: loss weights, Adam constants, the halving
/// learning-rate schedule, and the run seed.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lr: f64,
    pub lr_halve_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 1.2,
            lambda3: 0.6,
            lr: 1e-4,
            lr_halve_every: 5000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            iterations: 1000,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("iterations and batch size must be >= 1"));
        }
        if self.lr_halve_every == 0 {
            return Err(Error::invalid("lr_halve_every must be >= 1"));
        }
        Ok(())
    }

    /// Learning rate at 1-based iteration `t`: halved every
    /// `lr_halve_every` iterations.
    pub fn effective_lr(&self, t: usize) -> f64 {
        let halvings = (t.saturating_sub(1)) / self.lr_halve_every;
        self.lr * 0.5_f64.powi(halvings as i32)
    }
}
