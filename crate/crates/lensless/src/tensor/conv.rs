//! Spatial convolution, Gaussian smoothing, and the smoothed box window
//! used when preprocessing cropped measurements.

use crate::error::{Error, Result};
use crate::tensor::{centered_offset, pad_replicate, Tensor};

/// Cross-correlation of `t` with a bank of kernels (the deep-learning
/// convention: no kernel flip). Each kernel must have odd spatial dims and
/// depth equal to the input channel count; kernel `k` produces output
/// channel `k`. Padding is zero-valued.
pub fn conv2d(t: &Tensor, kernels: &[Tensor], stride: usize, pad: usize) -> Result<Tensor> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::invalid("conv2d needs at least one kernel"))?;
    let (kh, kw) = first.dims();
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::invalid(format!("kernel spatial dims must be odd, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    for k in kernels {
        if k.dims() != (kh, kw) || k.channels() != t.channels() {
            return Err(Error::invalid(format!(
                "kernel {}x{}x{} incompatible with input {}x{}x{}",
                k.height(),
                k.width(),
                k.channels(),
                t.height(),
                t.width(),
                t.channels()
            )));
        }
    }
    let (h, w) = t.dims();
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::invalid("kernel larger than padded input"));
    }
    let out_h = (h + 2 * pad - kh) / stride + 1;
    let out_w = (w + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(out_h, out_w, kernels.len())?;
    for (k_idx, kernel) in kernels.iter().enumerate() {
        for or in 0..out_h {
            for oc in 0..out_w {
                let mut acc = 0.0;
                for a in 0..kh {
                    let ir = (or * stride + a) as isize - pad as isize;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    for b in 0..kw {
                        let ic = (oc * stride + b) as isize - pad as isize;
                        if ic < 0 || ic >= w as isize {
                            continue;
                        }
                        for ch in 0..t.channels() {
                            acc += kernel.get(a, b, ch) * t.get(ir as usize, ic as usize, ch);
                        }
                    }
                }
                out.set(or, oc, k_idx, acc);
            }
        }
    }
    Ok(out)
}

/// 1-D Gaussian taps truncated at +/- 4 sigma and renormalized to sum 1.
pub(crate) fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Separable Gaussian blur with replicate boundary handling.
pub fn gaussian_blur(t: &Tensor, sigma: f64) -> Result<Tensor> {
    if sigma <= 0.0 {
        return Err(Error::invalid(format!("gaussian_blur sigma must be > 0, got {sigma}")));
    }
    let taps = gaussian_kernel_1d(sigma);
    let radius = taps.len() / 2;
    let padded = pad_replicate(t, radius, radius, radius, radius);
    let (h, w) = t.dims();
    let channels = t.channels();

    // horizontal pass on the padded rows
    let mut horiz = Tensor::zeros(h + 2 * radius, w, channels)?;
    for r in 0..h + 2 * radius {
        for c in 0..w {
            for ch in 0..channels {
                let mut acc = 0.0;
                for (i, tap) in taps.iter().enumerate() {
                    acc += tap * padded.get(r, c + i, ch);
                }
                horiz.set(r, c, ch, acc);
            }
        }
    }
    // vertical pass
    let mut out = Tensor::zeros(h, w, channels)?;
    for r in 0..h {
        for c in 0..w {
            for ch in 0..channels {
                let mut acc = 0.0;
                for (i, tap) in taps.iter().enumerate() {
                    acc += tap * horiz.get(r + i, c, ch);
                }
                out.set(r, c, ch, acc);
            }
        }
    }
    Ok(out)
}

/// A centered binary box smoothed by a Gaussian of std `sigma`: 1 deep
/// inside the interior, 0 far outside, smooth in between. Used to taper
/// replicate-padded measurements.
pub fn smoothed_box_window(
    height: usize,
    width: usize,
    interior_h: usize,
    interior_w: usize,
    sigma: f64,
) -> Result<Tensor> {
    if interior_h > height || interior_w > width {
        return Err(Error::invalid(format!(
            "interior {interior_h}x{interior_w} exceeds window {height}x{width}"
        )));
    }
    if sigma <= 0.0 {
        return Err(Error::invalid(format!("window sigma must be > 0, got {sigma}")));
    }
    let r0 = centered_offset(height, interior_h);
    let c0 = centered_offset(width, interior_w);
    let mut boxed = Tensor::zeros(height, width, 1)?;
    for r in r0..r0 + interior_h {
        for c in c0..c0 + interior_w {
            boxed.set(r, c, 0, 1.0);
        }
    }
    // blur of an all-ones box is all ones; skip the pass
    if interior_h == height && interior_w == width {
        return Ok(boxed);
    }
    let blurred = gaussian_blur(&boxed, sigma)?;
    Ok(blurred.map(|v| v.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::test_util::{random_tensor, rel_err};

    /// Plain four-loop cross-correlation used as the oracle.
    fn conv2d_naive(t: &Tensor, kernels: &[Tensor], stride: usize, pad: usize) -> Tensor {
        let (h, w) = t.dims();
        let (kh, kw) = kernels[0].dims();
        let out_h = (h + 2 * pad - kh) / stride + 1;
        let out_w = (w + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(out_h, out_w, kernels.len()).unwrap();
        for (k_idx, kernel) in kernels.iter().enumerate() {
            for or in 0..out_h {
                for oc in 0..out_w {
                    let mut acc = 0.0;
                    for a in 0..kh {
                        for b in 0..kw {
                            let ir = (or * stride + a) as isize - pad as isize;
                            let ic = (oc * stride + b) as isize - pad as isize;
                            if ir >= 0 && ir < h as isize && ic >= 0 && ic < w as isize {
                                for ch in 0..t.channels() {
                                    acc += kernel.get(a, b, ch)
                                        * t.get(ir as usize, ic as usize, ch);
                                }
                            }
                        }
                    }
                    out.set(or, oc, k_idx, acc);
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let t = random_tensor(5, 4, 1, 1);
        let id = Tensor::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let out = conv2d(&t, &[id], 1, 0).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn averaging_kernel_preserves_constant_interior() {
        let t = Tensor::constant(6, 6, 1, 3.5).unwrap();
        let avg = Tensor::constant(3, 3, 1, 1.0 / 9.0).unwrap();
        let out = conv2d(&t, &[avg], 1, 0).unwrap();
        assert_eq!(out.shape(), (4, 4, 1));
        for v in out.data() {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let t = random_tensor(5, 5, 2, 7);
        let kernels = vec![random_tensor(3, 3, 2, 8), random_tensor(3, 3, 2, 9)];
        let fast = conv2d(&t, &kernels, 1, 1).unwrap();
        let slow = conv2d_naive(&t, &kernels, 1, 1);
        assert!(rel_err(fast.data(), slow.data()) < 1e-12);

        // strided case
        let fast2 = conv2d(&t, &kernels, 2, 1).unwrap();
        let slow2 = conv2d_naive(&t, &kernels, 2, 1);
        assert!(rel_err(fast2.data(), slow2.data()) < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let t = random_tensor(4, 4, 2, 1);
        let k = random_tensor(3, 3, 1, 2);
        assert!(conv2d(&t, &[k], 1, 1).is_err());
        let even = random_tensor(2, 2, 2, 3);
        assert!(conv2d(&t, &[even], 1, 0).is_err());
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let t = Tensor::constant(8, 8, 1, 2.25).unwrap();
        let out = gaussian_blur(&t, 1.3).unwrap();
        for v in out.data() {
            assert!((v - 2.25).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_commutes_with_flip() {
        let t = random_tensor(7, 6, 1, 42);
        let flip = |x: &Tensor| {
            Tensor::from_fn(x.height(), x.width(), 1, |r, c, _| {
                x.get(x.height() - 1 - r, x.width() - 1 - c, 0)
            })
            .unwrap()
        };
        let a = gaussian_blur(&flip(&t), 0.9).unwrap();
        let b = flip(&gaussian_blur(&t, 0.9).unwrap());
        assert!(rel_err(a.data(), b.data()) < 1e-12);
    }

    #[test]
    fn impulse_response_matches_kernel_evaluation() {
        let sigma = 1.1;
        let taps = gaussian_kernel_1d(sigma);
        let radius = taps.len() / 2;
        let n = 2 * radius + 5;
        let mut t = Tensor::zeros(n, n, 1).unwrap();
        let c = n / 2;
        t.set(c, c, 0, 1.0);
        let out = gaussian_blur(&t, sigma).unwrap();
        for dr in 0..taps.len() {
            for dc in 0..taps.len() {
                let r = c + dr - radius;
                let col = c + dc - radius;
                let expected = taps[dr] * taps[dc];
                assert!((out.get(r, col, 0) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn window_is_all_ones_when_interior_fills() {
        let w = smoothed_box_window(5, 7, 5, 7, 2.0).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tiny_sigma_approximates_hard_box() {
        let w = smoothed_box_window(12, 12, 6, 6, 0.1).unwrap();
        for r in 0..12 {
            for c in 0..12 {
                let inside = (3..9).contains(&r) && (3..9).contains(&c);
                let expected = if inside { 1.0 } else { 0.0 };
                assert!(
                    (w.get(r, c, 0) - expected).abs() < 1e-3,
                    "({r},{c}) = {}",
                    w.get(r, c, 0)
                );
            }
        }
    }

    #[test]
    fn window_symmetry_and_range() {
        let w = smoothed_box_window(16, 10, 8, 4, 1.5).unwrap();
        for r in 0..16 {
            for c in 0..10 {
                let v = w.get(r, c, 0);
                assert!((0.0..=1.0).contains(&v));
                assert!((v - w.get(15 - r, c, 0)).abs() < 1e-12);
                assert!((v - w.get(r, 9 - c, 0)).abs() < 1e-12);
            }
        }
        // center saturates when the interior dwarfs sigma
        let big = smoothed_box_window(64, 64, 48, 48, 2.0).unwrap();
        assert!(big.get(32, 32, 0) >= 1.0 - 1e-6);
    }
}
