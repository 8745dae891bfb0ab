//! Lensless-camera optics simulation: phase-mask point spread functions
//! via Fresnel propagation, and synthetic separable calibration matrices
//! from 1-D mask codes.
//!
//! The separable synthesis stands in for physical calibration so that the
//! "calibrated" initialization paths have a ground-truth system at desk
//! scale. PSF simulation follows the thin-element approximation: the mask
//! imposes a phase delay `2*pi*(n-1)*h/lambda`, and the field then travels
//! the mask-sensor distance under the Fresnel transfer function.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{fft2, ifft2, resize, ResizeMode, Tensor};

/// Default per-channel simulation wavelengths (meters) when a 3-channel
/// PSF is requested: R, G, B.
pub const RGB_WAVELENGTHS: [f64; 3] = [640e-9, 532e-9, 460e-9];

/// Surface relief profile of a phase mask.
#[derive(Debug, Clone)]
pub struct MaskHeightProfile {
    /// Heights in meters, one channel.
    pub heights: Tensor,
    /// Sample spacing of the height grid, meters (square sampling).
    pub feature_pitch: f64,
    /// Refractive index of the mask substrate.
    pub refractive_index: f64,
}

impl MaskHeightProfile {
    pub fn new(heights: Tensor, feature_pitch: f64, refractive_index: f64) -> Result<Self> {
        if heights.channels() != 1 {
            return Err(Error::invalid("mask height profile must have one channel"));
        }
        if heights.data().iter().any(|&h| h < 0.0) {
            return Err(Error::invalid("mask heights must be >= 0"));
        }
        if feature_pitch <= 0.0 {
            return Err(Error::invalid("feature pitch must be > 0"));
        }
        if refractive_index <= 1.0 {
            return Err(Error::invalid("refractive index must exceed 1"));
        }
        Ok(MaskHeightProfile { heights, feature_pitch, refractive_index })
    }

    /// A two-level (0 / `step_height`) pseudo-random mask.
    pub fn random_binary(
        n: usize,
        feature_pitch: f64,
        refractive_index: f64,
        step_height: f64,
        seed: u64,
    ) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let heights = Tensor::from_fn(n, n, 1, |_, _, _| {
            if rng.gen_bool(0.5) {
                step_height
            } else {
                0.0
            }
        })?;
        MaskHeightProfile::new(heights, feature_pitch, refractive_index)
    }
}

/// Point spread function of the camera: the sensor pattern cast by a
/// single on-axis point source.
#[derive(Debug, Clone)]
pub struct Psf {
    pub kernel: Tensor,
    /// Meters per kernel pixel.
    pub pitch: f64,
}

impl Psf {
    pub fn new(kernel: Tensor, pitch: f64) -> Result<Self> {
        if kernel.channels() != 1 && kernel.channels() != 3 {
            return Err(Error::invalid("PSF must have 1 or 3 channels"));
        }
        if kernel.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("PSF values must be >= 0"));
        }
        if kernel.sum() <= 0.0 {
            return Err(Error::invalid("PSF must have strictly positive total energy"));
        }
        if pitch <= 0.0 {
            return Err(Error::invalid("PSF pitch must be > 0"));
        }
        Ok(Psf { kernel, pitch })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.kernel.dims()
    }
}

/// Physical parameters driving uncalibrated initialization.
#[derive(Debug, Clone, Copy)]
pub struct CameraGeometry {
    /// Sensor pixel pitch `p` in meters (per-channel pitch for Bayer data).
    pub pixel_pitch: f64,
    /// Mask-to-sensor distance `d` in meters.
    pub mask_sensor_dist: f64,
    /// Scene (or calibration monitor) distance `z` in meters.
    pub scene_dist: f64,
    /// Physical scene extent in meters.
    pub scene_height: f64,
    pub scene_width: f64,
    /// Reconstruction grid, pixels.
    pub recon_rows: usize,
    pub recon_cols: usize,
    /// Sensor grid, pixels.
    pub sensor_rows: usize,
    pub sensor_cols: usize,
}

impl CameraGeometry {
    pub fn validate(&self) -> Result<()> {
        let physical = [
            ("pixel_pitch", self.pixel_pitch),
            ("mask_sensor_dist", self.mask_sensor_dist),
            ("scene_dist", self.scene_dist),
            ("scene_height", self.scene_height),
            ("scene_width", self.scene_width),
        ];
        for (name, v) in physical {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("geometry field {name} must be > 0, got {v}")));
            }
        }
        if self.recon_rows == 0
            || self.recon_cols == 0
            || self.sensor_rows == 0
            || self.sensor_cols == 0
        {
            return Err(Error::invalid("geometry pixel dims must be >= 1"));
        }
        Ok(())
    }

    /// Toeplitz slopes (rows, cols): how many scene pixels map onto one
    /// sensor-projection pixel along each axis.
    pub fn slopes(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let proj_rows =
            self.scene_height * self.mask_sensor_dist / (self.pixel_pitch * self.scene_dist);
        let proj_cols =
            self.scene_width * self.mask_sensor_dist / (self.pixel_pitch * self.scene_dist);
        Ok((self.recon_rows as f64 / proj_rows, self.recon_cols as f64 / proj_cols))
    }
}

/// The pair (Phi_L, Phi_R) defining the separable forward model
/// `Y = Phi_L X Phi_R^T`.
#[derive(Debug, Clone)]
pub struct SeparableSystem {
    /// sensor_rows x recon_rows.
    pub phi_l: DMatrix<f64>,
    /// sensor_cols x recon_cols.
    pub phi_r: DMatrix<f64>,
}

impl SeparableSystem {
    pub fn new(phi_l: DMatrix<f64>, phi_r: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("phi_l", &phi_l), ("phi_r", &phi_r)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("{name} contains non-finite entries")));
            }
            if m.iter().all(|&v| v == 0.0) {
                return Err(Error::invalid(format!("{name} is all-zero")));
            }
        }
        Ok(SeparableSystem { phi_l, phi_r })
    }

    pub fn sensor_dims(&self) -> (usize, usize) {
        (self.phi_l.nrows(), self.phi_r.nrows())
    }

    pub fn recon_dims(&self) -> (usize, usize) {
        (self.phi_l.ncols(), self.phi_r.ncols())
    }
}

/// Complex optical field sampled on a regular spatial grid.
#[derive(Debug, Clone)]
pub struct ComplexField {
    height: usize,
    width: usize,
    /// Sample spacing, meters.
    pitch: f64,
    data: Vec<Complex64>,
}

impl ComplexField {
    /// Field just after a unit plane wave passes the mask: `exp(i*phi)`
    /// with `phi = 2*pi*(n-1)*h/lambda`.
    pub fn from_mask(mask: &MaskHeightProfile, wavelength: f64) -> Result<Self> {
        if wavelength <= 0.0 {
            return Err(Error::invalid("wavelength must be > 0"));
        }
        let (h, w) = mask.heights.dims();
        let scale = 2.0 * std::f64::consts::PI * (mask.refractive_index - 1.0) / wavelength;
        let data = mask
            .heights
            .data()
            .iter()
            .map(|&height| Complex64::from_polar(1.0, scale * height))
            .collect();
        Ok(ComplexField { height: h, width: w, pitch: mask.feature_pitch, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Total field energy (sum of squared moduli).
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Squared magnitude of the field as a 1-channel tensor.
    pub fn intensity(&self) -> Result<Tensor> {
        Tensor::from_vec(
            self.height,
            self.width,
            1,
            self.data.iter().map(|z| z.norm_sqr()).collect(),
        )
    }

    /// Propagates the field a distance `d` using the Fresnel transfer
    /// function `exp(-i*pi*lambda*d*(fx^2 + fy^2))`, which has unit modulus
    /// at every frequency and therefore conserves energy.
    ///
    /// Fails when the transfer function would alias on this grid, i.e.
    /// when `lambda * d > N * pitch^2` along either axis.
    pub fn propagate(&self, wavelength: f64, distance: f64) -> Result<ComplexField> {
        if wavelength <= 0.0 || distance <= 0.0 {
            return Err(Error::invalid("wavelength and distance must be > 0"));
        }
        let limit = self.height.min(self.width) as f64 * self.pitch * self.pitch;
        if wavelength * distance > limit * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "Fresnel transfer function aliases: lambda*d = {:.3e} exceeds N*pitch^2 = {:.3e}; \
                 reduce the distance, enlarge the grid, or coarsen the pitch",
                wavelength * distance,
                limit
            )));
        }
        let mut plane = self.data.clone();
        crate::tensor::fft::fft_plane(&mut plane, self.height, self.width, false);
        let fy = freq_axis(self.height, self.pitch);
        let fx = freq_axis(self.width, self.pitch);
        for r in 0..self.height {
            for c in 0..self.width {
                let f2 = fy[r] * fy[r] + fx[c] * fx[c];
                let phase = -std::f64::consts::PI * wavelength * distance * f2;
                plane[r * self.width + c] *= Complex64::from_polar(1.0, phase);
            }
        }
        crate::tensor::fft::fft_plane(&mut plane, self.height, self.width, true);
        let scale = 1.0 / (self.height * self.width) as f64;
        for z in &mut plane {
            *z *= scale;
        }
        Ok(ComplexField { height: self.height, width: self.width, pitch: self.pitch, data: plane })
    }
}

/// DFT sample frequencies for `n` samples at spacing `pitch`.
fn freq_axis(n: usize, pitch: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let k = if k <= (n - 1) / 2 { k as f64 } else { k as f64 - n as f64 };
            k / (n as f64 * pitch)
        })
        .collect()
}

/// Simulates the PSF of a phase mask: phase delay, Fresnel propagation
/// over `distance`, squared magnitude, and resampling to `out_pitch`.
pub fn simulate_psf_fresnel(
    mask: &MaskHeightProfile,
    wavelength: f64,
    distance: f64,
    out_pitch: f64,
) -> Result<Psf> {
    if out_pitch <= 0.0 {
        return Err(Error::invalid("output pitch must be > 0"));
    }
    let field = ComplexField::from_mask(mask, wavelength)?;
    let propagated = field.propagate(wavelength, distance)?;
    let intensity = propagated.intensity()?;
    let (h, w) = intensity.dims();
    let out_h = ((h as f64 * mask.feature_pitch / out_pitch).round() as usize).max(1);
    let out_w = ((w as f64 * mask.feature_pitch / out_pitch).round() as usize).max(1);
    let kernel = resize(&intensity, out_h, out_w, ResizeMode::Bilinear)?;
    // bilinear resampling of a nonnegative field stays nonnegative up to
    // rounding; clamp the dust
    Psf::new(kernel.map(|v| v.max(0.0)), out_pitch)
}

/// Simulates a 3-channel PSF at the standard R/G/B wavelengths.
pub fn simulate_psf_fresnel_rgb(
    mask: &MaskHeightProfile,
    distance: f64,
    out_pitch: f64,
) -> Result<Psf> {
    let planes: Vec<Tensor> = RGB_WAVELENGTHS
        .iter()
        .map(|&wl| simulate_psf_fresnel(mask, wl, distance, out_pitch).map(|p| p.kernel))
        .collect::<Result<_>>()?;
    Psf::new(Tensor::stack_channels(&planes)?, out_pitch)
}

/// Builds a Toeplitz-structured separable system from 1-D codes by
/// geometric stretching: column `j` of each matrix is the code cyclically
/// shifted by `floor(j / slope)`, so entries are constant along slope-m
/// diagonals. An optional Gaussian blur of the columns mimics diffractive
/// blur, and entries are shifted to be nonnegative like a physical
/// transmissivity pattern.
pub fn simulate_separable_system(
    code_l: &[f64],
    code_r: &[f64],
    geometry: &CameraGeometry,
    blur_sigma: f64,
) -> Result<SeparableSystem> {
    let (m_l, m_r) = geometry.slopes()?;
    if blur_sigma < 0.0 {
        return Err(Error::invalid("blur sigma must be >= 0"));
    }
    let phi_l =
        stretched_code_matrix(code_l, geometry.sensor_rows, geometry.recon_rows, m_l, blur_sigma)?;
    let phi_r =
        stretched_code_matrix(code_r, geometry.sensor_cols, geometry.recon_cols, m_r, blur_sigma)?;
    SeparableSystem::new(phi_l, phi_r)
}

pub(crate) fn stretched_code_matrix(
    code: &[f64],
    rows: usize,
    cols: usize,
    slope: f64,
    blur_sigma: f64,
) -> Result<DMatrix<f64>> {
    if code.len() < cols {
        return Err(Error::invalid(format!(
            "code length {} shorter than requested {cols} columns",
            code.len()
        )));
    }
    if slope <= 0.0 {
        return Err(Error::invalid("slope must be > 0"));
    }
    let n = code.len() as isize;
    let mut m = DMatrix::from_fn(rows, cols, |i, j| {
        let shift = (j as f64 / slope).floor() as isize;
        let idx = (i as isize - shift).rem_euclid(n);
        code[idx as usize]
    });
    if blur_sigma > 0.0 {
        m = blur_columns(&m, blur_sigma);
    }
    let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        m.iter_mut().for_each(|v| *v -= min);
    }
    Ok(m)
}

/// 1-D Gaussian blur down each column with replicate boundary.
fn blur_columns(m: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let taps = crate::tensor::conv::gaussian_kernel_1d(sigma);
    let radius = taps.len() / 2;
    let rows = m.nrows() as isize;
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        taps.iter()
            .enumerate()
            .map(|(k, tap)| {
                let r = (i as isize + k as isize - radius as isize).clamp(0, rows - 1);
                tap * m[(r as usize, j)]
            })
            .sum()
    })
}

/// Circular 2-D convolution of two equal-size 1-channel planes, used by
/// test oracles and the Wiener self-consistency anchors.
pub fn circular_conv_plane(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() || a.channels() != 1 || b.channels() != 1 {
        return Err(Error::invalid("circular_conv_plane needs equal-size 1-channel planes"));
    }
    let fa = fft2(a)?;
    let fb = fft2(b)?;
    ifft2(&crate::tensor::hadamard(&fa, &fb)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_mask(n: usize, seed: u64) -> MaskHeightProfile {
        // lambda/2 phase step at 500 nm with refractive index 1.5
        MaskHeightProfile::random_binary(n, 10e-6, 1.5, 0.5e-6, seed).unwrap()
    }

    #[test]
    fn flat_mask_gives_flat_psf() {
        let heights = Tensor::constant(16, 16, 1, 0.3e-6).unwrap();
        let mask = MaskHeightProfile::new(heights, 10e-6, 1.5).unwrap();
        let psf = simulate_psf_fresnel(&mask, 532e-9, 1e-12, 10e-6).unwrap();
        for v in psf.kernel.data() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }

        // any in-band distance: constant phase never shapes the intensity
        let psf2 = simulate_psf_fresnel(&mask, 532e-9, 2e-3, 10e-6).unwrap();
        for v in psf2.kernel.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_distance_limit_is_identity() {
        let mask = test_mask(16, 5);
        let psf = simulate_psf_fresnel(&mask, 500e-9, 1e-12, 10e-6).unwrap();
        // |exp(i phi)|^2 = 1 everywhere
        for v in psf.kernel.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn band_limit_violation_is_rejected() {
        let mask = test_mask(16, 6);
        // N * pitch^2 / lambda = 16 * 1e-10 / 5e-7 = 3.2 mm
        let err = simulate_psf_fresnel(&mask, 500e-9, 5e-3, 10e-6);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn propagation_conserves_energy_and_composes() {
        let mask = test_mask(16, 7);
        let field = ComplexField::from_mask(&mask, 500e-9).unwrap();
        let e0 = field.energy();
        let p = field.propagate(500e-9, 1.5e-3).unwrap();
        assert!(((p.energy() - e0) / e0).abs() < 1e-6);

        let two_step =
            field.propagate(500e-9, 1.0e-3).unwrap().propagate(500e-9, 0.5e-3).unwrap();
        let one_step = field.propagate(500e-9, 1.5e-3).unwrap();
        let num: f64 = two_step
            .data()
            .iter()
            .zip(one_step.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = one_step.data().iter().map(|z| z.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-8);
    }

    #[test]
    fn matches_direct_fresnel_integral_at_critical_sampling() {
        // at lambda * d = N * pitch^2 (even N) the sampled chirp is
        // N-periodic and the naive quadrature of the diffraction integral
        // agrees with the transfer-function path exactly
        let n = 32usize;
        let pitch = 10e-6;
        let wavelength = 500e-9;
        let distance = n as f64 * pitch * pitch / wavelength;

        let mask = test_mask(n, 9);
        let field = ComplexField::from_mask(&mask, wavelength).unwrap();
        let fast = field.propagate(wavelength, distance).unwrap();

        let lam_d = wavelength * distance;
        let pref = Complex64::new(0.0, -1.0) / lam_d; // 1/(i lambda d)
        let mut oracle = vec![Complex64::new(0.0, 0.0); n * n];
        for m in 0..n {
            for nn in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for mp in 0..n {
                    for np in 0..n {
                        let dy = (m as f64 - mp as f64) * pitch;
                        let dx = (nn as f64 - np as f64) * pitch;
                        let phase = std::f64::consts::PI * (dy * dy + dx * dx) / lam_d;
                        acc += field.data()[mp * n + np] * Complex64::from_polar(1.0, phase);
                    }
                }
                oracle[m * n + nn] = acc * pref * pitch * pitch;
            }
        }
        let num: f64 =
            fast.data().iter().zip(&oracle).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = oracle.iter().map(|z| z.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-4, "rel err {}", (num / den).sqrt());
    }

    fn toy_geometry(sensor: usize, recon: usize, slope: f64) -> CameraGeometry {
        // pick scene extent so that H*d/(p*z) = recon/slope exactly
        let p = 10e-6;
        let d = 2e-3;
        let z = 0.3;
        let extent = (recon as f64 / slope) * p * z / d;
        CameraGeometry {
            pixel_pitch: p,
            mask_sensor_dist: d,
            scene_dist: z,
            scene_height: extent,
            scene_width: extent,
            recon_rows: recon,
            recon_cols: recon,
            sensor_rows: sensor,
            sensor_cols: sensor,
        }
    }

    #[test]
    fn impulse_code_slope_one_gives_selector() {
        let g = toy_geometry(8, 8, 1.0);
        let mut code = vec![0.0; 8];
        code[0] = 1.0;
        let sys = simulate_separable_system(&code, &code, &g, 0.0).unwrap();
        for j in 0..8 {
            let ones: Vec<usize> = (0..8).filter(|&i| sys.phi_l[(i, j)] == 1.0).collect();
            assert_eq!(ones, vec![j]);
        }
    }

    #[test]
    fn constant_code_gives_rank_one_matrix() {
        let g = toy_geometry(6, 4, 2.0);
        let code = vec![1.0; 8];
        let sys = simulate_separable_system(&code, &code, &g, 0.0).unwrap();
        assert!(sys.phi_l.iter().all(|&v| v == 1.0));
        assert_eq!(sys.phi_l.rank(1e-12), 1);
    }

    #[test]
    fn stretched_columns_match_index_oracle() {
        let g = toy_geometry(12, 10, 2.0);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let code: Vec<f64> =
            (0..12).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let sys = simulate_separable_system(&code, &code, &g, 0.0).unwrap();

        // independent index arithmetic: column j is the code cyclically
        // shifted by floor(j/2), entries shifted up by 1 to be nonnegative
        for i in 0..12 {
            for j in 0..10 {
                let idx = (i as isize - (j / 2) as isize).rem_euclid(12) as usize;
                assert_eq!(sys.phi_l[(i, j)], code[idx] + 1.0);
            }
        }
        // slope-2 diagonals are constant
        for i in 0..11 {
            for j in 0..8 {
                assert_eq!(sys.phi_l[(i, j)], sys.phi_l[(i + 1, j + 2)]);
            }
        }
    }

    #[test]
    fn short_code_is_rejected() {
        let g = toy_geometry(8, 8, 1.0);
        let code = vec![1.0; 4];
        assert!(simulate_separable_system(&code, &code, &g, 0.0).is_err());
    }

    #[test]
    fn rgb_psf_has_three_channels() {
        let mask = test_mask(16, 11);
        let psf = simulate_psf_fresnel_rgb(&mask, 1.5e-3, 10e-6).unwrap();
        assert_eq!(psf.kernel.channels(), 3);
        assert!(psf.kernel.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn simulated_psf_is_deterministic() {
        let mask = test_mask(16, 13);
        let a = simulate_psf_fresnel(&mask, 532e-9, 1.5e-3, 8e-6).unwrap();
        let b = simulate_psf_fresnel(&mask, 532e-9, 1.5e-3, 8e-6).unwrap();
        assert_eq!(a.kernel, b.kernel);
    }
}
