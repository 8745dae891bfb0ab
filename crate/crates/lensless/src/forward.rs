//! Forward models: synthesize lensless measurements from scenes.
//!
//! Four models, all linear in the scene at zero noise: the general matrix
//! model `y = Phi x`, the separable model `Y = Phi_L X Phi_R^T`, the full
//! convolutional model `Y = P * X`, and the cropped-convolutional model
//! `Y = C(P * X)` for sensors smaller than the convolution support. Noise
//! is additive Gaussian, reproducible from an explicit seed.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::optics::{Psf, SeparableSystem};
use crate::tensor::mat::{channel_to_matrix, matrices_to_tensor};
use crate::tensor::{crop_center, fft2, hadamard, ifft2, Tensor};

/// Adds seeded Gaussian noise of standard deviation `sigma`.
pub fn add_gaussian_noise(t: &Tensor, sigma: f64, seed: u64) -> Result<Tensor> {
    if sigma < 0.0 {
        return Err(Error::invalid("noise sigma must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(t.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = t.map(|v| v + normal.sample(&mut rng));
    out.ensure_finite("add_gaussian_noise")?;
    Ok(out)
}

/// General linear model: `y = Phi vec(x)` per channel, with row-major
/// vectorization. Output is a (rows x 1) tensor per channel.
pub fn forward_general(phi: &DMatrix<f64>, x: &Tensor) -> Result<Tensor> {
    let (h, w) = x.dims();
    if phi.ncols() != h * w {
        return Err(Error::invalid(format!(
            "phi has {} columns but the scene has {} pixels",
            phi.ncols(),
            h * w
        )));
    }
    let planes: Vec<DMatrix<f64>> = (0..x.channels())
        .map(|ch| {
            let plane = channel_to_matrix(x, ch)?;
            let vec_x =
                DMatrix::from_fn(h * w, 1, |i, _| plane[(i / w, i % w)]);
            Ok(phi * vec_x)
        })
        .collect::<Result<_>>()?;
    matrices_to_tensor(&planes)
}

/// Separable model: `Y = Phi_L X Phi_R^T + N` per channel.
pub fn forward_separable(
    sys: &SeparableSystem,
    x: &Tensor,
    noise_sigma: f64,
    seed: u64,
) -> Result<Tensor> {
    let (p, q) = sys.recon_dims();
    if x.dims() != (p, q) {
        return Err(Error::invalid(format!(
            "scene dims {:?} do not match system recon dims ({p}, {q})",
            x.dims()
        )));
    }
    let planes: Vec<DMatrix<f64>> = (0..x.channels())
        .map(|ch| {
            let plane = channel_to_matrix(x, ch)?;
            Ok(&sys.phi_l * plane * sys.phi_r.transpose())
        })
        .collect::<Result<_>>()?;
    add_gaussian_noise(&matrices_to_tensor(&planes)?, noise_sigma, seed)
}

/// Selects the PSF plane for a measurement channel: a 1-channel PSF
/// broadcasts, a 3-channel PSF applies per channel.
fn psf_plane(psf: &Psf, channel: usize, scene_channels: usize) -> Result<Tensor> {
    if psf.kernel.channels() == 1 {
        psf.kernel.channel(0)
    } else if psf.kernel.channels() == scene_channels {
        psf.kernel.channel(channel)
    } else {
        Err(Error::invalid(format!(
            "PSF has {} channels but the scene has {scene_channels}",
            psf.kernel.channels()
        )))
    }
}

/// Full linear convolution `Y = P * X + N` (true convolution, kernel
/// flipped relative to cross-correlation), computed via zero-padded FFT.
/// Output dims are `(Hx + Hp - 1) x (Wx + Wp - 1)`.
pub fn forward_conv(psf: &Psf, x: &Tensor, noise_sigma: f64, seed: u64) -> Result<Tensor> {
    let (hx, wx) = x.dims();
    let (hp, wp) = psf.dims();
    let (oh, ow) = (hx + hp - 1, wx + wp - 1);
    let planes: Vec<Tensor> = (0..x.channels())
        .map(|ch| {
            let xp = zero_pad_top_left(&x.channel(ch)?, oh, ow)?;
            let pp = zero_pad_top_left(&psf_plane(psf, ch, x.channels())?, oh, ow)?;
            ifft2(&hadamard(&fft2(&xp)?, &fft2(&pp)?)?)
        })
        .collect::<Result<_>>()?;
    add_gaussian_noise(&Tensor::stack_channels(&planes)?, noise_sigma, seed)
}

/// Cropped-convolution model `Y = C(P * X) + N`: the centered
/// `sensor_rows x sensor_cols` window of the full convolution.
pub fn forward_cropconv(
    psf: &Psf,
    x: &Tensor,
    sensor_rows: usize,
    sensor_cols: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Tensor> {
    let full = forward_conv(psf, x, 0.0, 0)?;
    let (fh, fw) = full.dims();
    if sensor_rows > fh || sensor_cols > fw {
        return Err(Error::invalid(format!(
            "sensor {sensor_rows}x{sensor_cols} exceeds full convolution dims {fh}x{fw}"
        )));
    }
    add_gaussian_noise(&crop_center(&full, sensor_rows, sensor_cols)?, noise_sigma, seed)
}

fn zero_pad_top_left(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w) = t.dims();
    if out_h < h || out_w < w {
        return Err(Error::invalid("zero-pad target smaller than input"));
    }
    let mut out = Tensor::zeros(out_h, out_w, t.channels())?;
    for r in 0..h {
        for c in 0..w {
            for ch in 0..t.channels() {
                out.set(r, c, ch, t.get(r, c, ch));
            }
        }
    }
    Ok(out)
}

/// Splits a Bayer RGGB raw frame into a half-resolution 4-channel tensor
/// with channel order (R, Gr, Gb, B).
pub fn bayer_split(raw: &Tensor) -> Result<Tensor> {
    if raw.channels() != 1 {
        return Err(Error::invalid("bayer_split expects a 1-channel raw frame"));
    }
    let (h, w) = raw.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("raw dims {h}x{w} must be even")));
    }
    Tensor::from_fn(h / 2, w / 2, 4, |r, c, ch| {
        let (dr, dc) = [(0, 0), (0, 1), (1, 0), (1, 1)][ch];
        raw.get(2 * r + dr, 2 * c + dc, 0)
    })
}

/// Exact inverse of [`bayer_split`].
pub fn bayer_join(channels: &Tensor) -> Result<Tensor> {
    if channels.channels() != 4 {
        return Err(Error::invalid("bayer_join expects a 4-channel tensor"));
    }
    let (h, w) = channels.dims();
    Tensor::from_fn(2 * h, 2 * w, 1, |r, c, _| {
        let ch = (r % 2) * 2 + (c % 2);
        channels.get(r / 2, c / 2, ch)
    })
}

/// Samples an RGB scene onto an RGGB mosaic, so the 4-channel Bayer
/// pipeline can be exercised on synthetic data.
pub fn mosaic_rgb(rgb: &Tensor) -> Result<Tensor> {
    if rgb.channels() != 3 {
        return Err(Error::invalid("mosaic_rgb expects a 3-channel scene"));
    }
    let (h, w) = rgb.dims();
    Tensor::from_fn(h, w, 1, |r, c, _| {
        let ch = match (r % 2, c % 2) {
            (0, 0) => 0,          // R
            (1, 1) => 2,          // B
            _ => 1,               // G at both Gr and Gb sites
        };
        rgb.get(r, c, ch)
    })
}
