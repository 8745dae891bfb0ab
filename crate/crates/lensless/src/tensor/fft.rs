//! 2-D discrete Fourier transforms over per-channel planes.
//!
//! Forward transform is unnormalized; the inverse carries the 1/(H*W)
//! factor, matching the Wiener-filter algebra used by the reconstruction
//! modules. Arbitrary sizes are supported (mixed radix / Bluestein under
//! the hood); nothing is silently padded to a power of two.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Complex-valued frequency-domain counterpart of [`Tensor`], produced by
/// [`fft2`]. Same element count and layout (row-major, channel-last).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub(crate) fn new(height: usize, width: usize, channels: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        ComplexSpectrum { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> Complex64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Elementwise map over the complex entries.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexSpectrum {
        ComplexSpectrum {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Complex conjugate of every entry.
    pub fn conj(&self) -> ComplexSpectrum {
        self.map(|z| z.conj())
    }
}

thread_local! {
    // the planner memoizes plans per (size, direction), which matters in
    // iterative solvers and training loops that transform the same dims
    // thousands of times
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> =
        std::cell::RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_plane(plane: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = if inverse {
            planner.plan_fft_inverse(width)
        } else {
            planner.plan_fft_forward(width)
        };
        for row in plane.chunks_exact_mut(width) {
            row_fft.process(row);
        }

        // columns via transpose, row FFT, transpose back
        let mut transposed = vec![Complex64::new(0.0, 0.0); plane.len()];
        for r in 0..height {
            for c in 0..width {
                transposed[c * height + r] = plane[r * width + c];
            }
        }
        let col_fft = if inverse {
            planner.plan_fft_inverse(height)
        } else {
            planner.plan_fft_forward(height)
        };
        for col in transposed.chunks_exact_mut(height) {
            col_fft.process(col);
        }
        for r in 0..height {
            for c in 0..width {
                plane[r * width + c] = transposed[c * height + r];
            }
        }
    });
}

/// Unnormalized forward 2-D DFT applied independently per channel.
pub fn fft2(t: &Tensor) -> Result<ComplexSpectrum> {
    let (h, w) = t.dims();
    if t.is_empty() {
        return Err(Error::invalid("fft2 of empty tensor"));
    }
    let channels = t.channels();
    let mut data = vec![Complex64::new(0.0, 0.0); h * w * channels];
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    for ch in 0..channels {
        for r in 0..h {
            for c in 0..w {
                plane[r * w + c] = Complex64::new(t.get(r, c, ch), 0.0);
            }
        }
        fft_plane(&mut plane, h, w, false);
        for (i, z) in plane.iter().enumerate() {
            data[i * channels + ch] = *z;
        }
    }
    Ok(ComplexSpectrum::new(h, w, channels, data))
}

/// Inverse 2-D DFT with 1/(H*W) normalization. The imaginary residue is
/// checked against the spectrum norm before being discarded; a large
/// residue signals a non-Hermitian spectrum upstream.
pub fn ifft2(s: &ComplexSpectrum) -> Result<Tensor> {
    let (h, w, channels) = s.shape();
    let scale = 1.0 / (h * w) as f64;
    let mut out = Tensor::zeros(h, w, channels)?;
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    let mut im_sq = 0.0_f64;
    let mut total_sq = 0.0_f64;
    for ch in 0..channels {
        for i in 0..h * w {
            plane[i] = s.data[i * channels + ch];
        }
        fft_plane(&mut plane, h, w, true);
        for (i, z) in plane.iter().enumerate() {
            let v = z * scale;
            im_sq += v.im * v.im;
            total_sq += v.norm_sqr();
            out.data_mut()[i * channels + ch] = v.re;
        }
    }
    if im_sq.sqrt() > 1e-6 * total_sq.sqrt() {
        return Err(Error::numeric(format!(
            "ifft2 imaginary residue {:.3e} exceeds 1e-6 of output norm {:.3e}",
            im_sq.sqrt(),
            total_sq.sqrt()
        )));
    }
    out.ensure_finite("ifft2")?;
    Ok(out)
}

/// Elementwise complex product. A 1-channel `b` broadcasts across all
/// channels of `a`.
pub fn hadamard(a: &ComplexSpectrum, b: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::invalid(format!(
            "hadamard dims mismatch: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let data = if b.channels == a.channels {
        a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect()
    } else if b.channels == 1 {
        a.data
            .iter()
            .enumerate()
            .map(|(i, &x)| x * b.data[i / a.channels])
            .collect()
    } else {
        return Err(Error::invalid(format!(
            "hadamard channel mismatch: {} vs {}",
            a.channels, b.channels
        )));
    };
    Ok(ComplexSpectrum::new(a.height, a.width, a.channels, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::test_util::{random_tensor, rel_err};

    /// Naive O(N^4) reference DFT, kept deliberately independent of the
    /// FFT path it checks.
    fn dft2_naive(t: &Tensor, channel: usize) -> Vec<Complex64> {
        let (h, w) = t.dims();
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        acc += t.get(r, c, channel) * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    #[test]
    fn single_element_dft_is_identity() {
        let t = Tensor::from_vec(1, 1, 1, vec![5.0]).unwrap();
        let s = fft2(&t).unwrap();
        assert_eq!(s.data()[0], Complex64::new(5.0, 0.0));
    }

    #[test]
    fn constant_tensor_has_only_dc() {
        let c = 0.7;
        let t = Tensor::constant(4, 4, 1, c).unwrap();
        let s = fft2(&t).unwrap();
        assert!((s.get(0, 0, 0) - Complex64::new(16.0 * c, 0.0)).norm() < 1e-12);
        for r in 0..4 {
            for col in 0..4 {
                if (r, col) != (0, 0) {
                    assert!(s.get(r, col, 0).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fft_matches_naive_dft() {
        let t = random_tensor(8, 8, 2, 11);
        let s = fft2(&t).unwrap();
        for ch in 0..2 {
            let oracle = dft2_naive(&t, ch);
            let mut num = 0.0;
            let mut den = 0.0;
            for r in 0..8 {
                for c in 0..8 {
                    num += (s.get(r, c, ch) - oracle[r * 8 + c]).norm_sqr();
                    den += oracle[r * 8 + c].norm_sqr();
                }
            }
            assert!((num / den).sqrt() < 1e-10);
        }
    }

    #[test]
    fn round_trip_various_sizes() {
        for &(h, w) in &[(7, 7), (8, 8), (16, 16), (33, 33), (7, 16)] {
            let t = random_tensor(h, w, 1, (h * 100 + w) as u64);
            let back = ifft2(&fft2(&t).unwrap()).unwrap();
            assert!(rel_err(back.data(), t.data()) < 1e-12, "size {h}x{w}");
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_tensor() {
        let s = ComplexSpectrum::new(3, 3, 1, vec![Complex64::new(0.0, 0.0); 9]);
        let t = ifft2(&s).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shifted_impulse_round_trips() {
        let mut t = Tensor::zeros(6, 5, 1).unwrap();
        t.set(2, 3, 0, 1.0);
        let back = ifft2(&fft2(&t).unwrap()).unwrap();
        assert!(rel_err(back.data(), t.data()) < 1e-12);
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        // a lone imaginary DC bin cannot come from a real tensor
        let mut data = vec![Complex64::new(0.0, 0.0); 16];
        data[0] = Complex64::new(0.0, 1.0);
        let s = ComplexSpectrum::new(4, 4, 1, data);
        assert!(matches!(ifft2(&s), Err(crate::error::Error::NumericError(_))));
    }

    #[test]
    fn hadamard_identities() {
        let t = random_tensor(4, 4, 1, 3);
        let a = fft2(&t).unwrap();
        let ones = ComplexSpectrum::new(4, 4, 1, vec![Complex64::new(1.0, 0.0); 16]);
        let zeros = ComplexSpectrum::new(4, 4, 1, vec![Complex64::new(0.0, 0.0); 16]);
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        assert!(hadamard(&a, &zeros).unwrap().data().iter().all(|z| z.norm() == 0.0));

        // (1+i)(1-i) = 2
        let x = ComplexSpectrum::new(1, 1, 1, vec![Complex64::new(1.0, 1.0)]);
        let y = ComplexSpectrum::new(1, 1, 1, vec![Complex64::new(1.0, -1.0)]);
        assert_eq!(hadamard(&x, &y).unwrap().data()[0], Complex64::new(2.0, 0.0));

        let wrong = ComplexSpectrum::new(2, 2, 1, vec![Complex64::new(0.0, 0.0); 4]);
        assert!(hadamard(&a, &wrong).is_err());
    }

    #[test]
    fn parseval_and_linearity() {
        for &n in &[7usize, 8, 16, 33] {
            let t = random_tensor(n, n, 1, n as u64);
            let s = fft2(&t).unwrap();
            let spatial: f64 = t.data().iter().map(|v| v * v).sum();
            let freq: f64 = s.data().iter().map(|z| z.norm_sqr()).sum();
            let parseval = freq / (n * n) as f64;
            assert!(((spatial - parseval) / spatial).abs() < 1e-10, "Parseval at {n}");
        }

        let x = random_tensor(9, 5, 1, 21);
        let y = random_tensor(9, 5, 1, 22);
        let combo = x.scale(1.7).add(&y.scale(-0.3)).unwrap();
        let lhs = fft2(&combo).unwrap();
        let fx = fft2(&x).unwrap();
        let fy = fft2(&y).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, z) in lhs.data().iter().enumerate() {
            let rhs = fx.data()[i] * 1.7 + fy.data()[i] * -0.3;
            num += (z - rhs).norm_sqr();
            den += rhs.norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-10);
    }
}
