//! Inversion-evolution diagnostics: how close the learned weights are to
//! inverting the forward model.
//!
//! For the separable model the products `W1 Phi_L` and `W2^T Phi_R`
//! approach identity matrices as training progresses; for the general
//! model the composite response `F^-1(F(W) . F(P))` approaches an
//! impulse. Both are reduced to scalar trend metrics here.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::optics::{Psf, SeparableSystem};
use crate::tensor::{embed_kernel_origin, fft2, hadamard, ifft2, Tensor};

use super::{GenInversionWeights, SepInversionWeights};

/// Products and off-identity energies of the separable inversion.
#[derive(Debug, Clone)]
pub struct SepDiagnosis {
    /// `W1 Phi_L`, recon_rows x recon_rows.
    pub product_l: DMatrix<f64>,
    /// `W2^T Phi_R`, recon_cols x recon_cols.
    pub product_r: DMatrix<f64>,
    pub off_identity_l: f64,
    pub off_identity_r: f64,
}

/// Normalized Frobenius distance of `m` from the best-scaled identity:
/// `||M - alpha I||_F^2 / ||M||_F^2` with `alpha = trace(M) / n`. An
/// all-zero product reports 1 (fully off-identity).
pub fn off_identity_energy(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let norm_sq: f64 = m.iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return 1.0;
    }
    let alpha = m.diagonal().iter().sum::<f64>() / n as f64;
    let mut dist_sq = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { alpha } else { 0.0 };
            let d = m[(i, j)] - target;
            dist_sq += d * d;
        }
    }
    dist_sq / norm_sq
}

/// Evaluates `W1 Phi_L` and `W2^T Phi_R` against the identity.
pub fn diagnose_sep(weights: &SepInversionWeights, sys: &SeparableSystem) -> Result<SepDiagnosis> {
    if weights.w1.ncols() != sys.phi_l.nrows() || weights.w2.nrows() != sys.phi_r.nrows() {
        return Err(Error::invalid(format!(
            "weights ({}x{}, {}x{}) incompatible with system ({}x{}, {}x{})",
            weights.w1.nrows(),
            weights.w1.ncols(),
            weights.w2.nrows(),
            weights.w2.ncols(),
            sys.phi_l.nrows(),
            sys.phi_l.ncols(),
            sys.phi_r.nrows(),
            sys.phi_r.ncols()
        )));
    }
    let product_l = &weights.w1 * &sys.phi_l;
    let product_r = weights.w2.transpose() * &sys.phi_r;
    let off_identity_l = off_identity_energy(&product_l);
    let off_identity_r = off_identity_energy(&product_r);
    Ok(SepDiagnosis { product_l, product_r, off_identity_l, off_identity_r })
}

/// Composite response of the general inversion against a PSF.
#[derive(Debug, Clone)]
pub struct GenDiagnosis {
    /// `F^-1(F(W) . F(P))` on the filter grid, 1 channel.
    pub response: Tensor,
    /// Energy of the peak sample over total response energy; 1 for a
    /// perfect impulse, 0 for a zero response.
    pub peak_ratio: f64,
    /// Location of the absolute peak.
    pub peak: (usize, usize),
    /// The horizontal slice of the response through the peak row.
    pub peak_row_slice: Vec<f64>,
}

/// Evaluates the impulse-likeness of `F^-1(F(W) . F(P))`. Multi-channel
/// PSFs are averaged into a single plane first.
pub fn diagnose_gen(weights: &GenInversionWeights, psf: &Psf) -> Result<GenDiagnosis> {
    let (wh, ww) = weights.w.dims();
    let (ph, pw) = psf.dims();
    if ph > wh || pw > ww {
        return Err(Error::invalid(format!(
            "PSF {ph}x{pw} exceeds filter dims {wh}x{ww}"
        )));
    }
    let plane = mean_plane(&psf.kernel)?;
    let embedded = embed_kernel_origin(&plane, wh, ww)?;
    let response = ifft2(&hadamard(&fft2(&weights.w)?, &fft2(&embedded)?)?)?;

    let mut peak = (0usize, 0usize);
    let mut peak_abs = -1.0;
    let mut total_sq = 0.0;
    for r in 0..wh {
        for c in 0..ww {
            let v = response.get(r, c, 0);
            total_sq += v * v;
            if v.abs() > peak_abs {
                peak_abs = v.abs();
                peak = (r, c);
            }
        }
    }
    let peak_ratio = if total_sq == 0.0 { 0.0 } else { peak_abs * peak_abs / total_sq };
    let peak_row_slice = (0..ww).map(|c| response.get(peak.0, c, 0)).collect();
    Ok(GenDiagnosis { response, peak_ratio, peak, peak_row_slice })
}

fn mean_plane(t: &Tensor) -> Result<Tensor> {
    if t.channels() == 1 {
        return t.channel(0);
    }
    let scale = 1.0 / t.channels() as f64;
    Tensor::from_fn(t.height(), t.width(), 1, |r, c, _| {
        (0..t.channels()).map(|ch| t.get(r, c, ch)).sum::<f64>() * scale
    })
}
