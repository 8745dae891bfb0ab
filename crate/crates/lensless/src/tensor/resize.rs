//! Spatial resampling (nearest and bilinear, align-corners-false).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interpolation mode for [`resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    Nearest,
    Bilinear,
}

/// Resamples to `new_h` x `new_w`. Nearest uses `floor(dst * in/out)`
/// source indexing (identity when dims are unchanged); bilinear uses the
/// align-corners-false convention `src = (dst + 0.5) * in/out - 0.5` with
/// edge clamping.
pub fn resize(t: &Tensor, new_h: usize, new_w: usize, mode: ResizeMode) -> Result<Tensor> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::invalid("resize target dims must be >= 1"));
    }
    let (h, w) = t.dims();
    let channels = t.channels();
    let scale_r = h as f64 / new_h as f64;
    let scale_c = w as f64 / new_w as f64;
    match mode {
        ResizeMode::Nearest => Tensor::from_fn(new_h, new_w, channels, |r, c, ch| {
            let sr = ((r as f64 * scale_r) as usize).min(h - 1);
            let sc = ((c as f64 * scale_c) as usize).min(w - 1);
            t.get(sr, sc, ch)
        }),
        ResizeMode::Bilinear => Tensor::from_fn(new_h, new_w, channels, |r, c, ch| {
            let sr = (r as f64 + 0.5) * scale_r - 0.5;
            let sc = (c as f64 + 0.5) * scale_c - 0.5;
            sample_bilinear(t, sr, sc, ch)
        }),
    }
}

fn sample_bilinear(t: &Tensor, row: f64, col: f64, ch: usize) -> f64 {
    let (h, w) = t.dims();
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let clamp_r = |r: f64| (r.max(0.0) as usize).min(h - 1);
    let clamp_c = |c: f64| (c.max(0.0) as usize).min(w - 1);
    let (ra, rb) = (clamp_r(r0), clamp_r(r0 + 1.0));
    let (ca, cb) = (clamp_c(c0), clamp_c(c0 + 1.0));
    let top = t.get(ra, ca, ch) * (1.0 - fc) + t.get(ra, cb, ch) * fc;
    let bot = t.get(rb, ca, ch) * (1.0 - fc) + t.get(rb, cb, ch) * fc;
    top * (1.0 - fr) + bot * fr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::test_util::random_tensor;

    #[test]
    fn same_dims_nearest_is_identity() {
        let t = random_tensor(5, 7, 2, 4);
        let out = resize(&t, 5, 7, ResizeMode::Nearest).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn constant_input_stays_constant() {
        let t = Tensor::constant(4, 4, 1, 1.25).unwrap();
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
            let out = resize(&t, 9, 3, mode).unwrap();
            for v in out.data() {
                assert!((v - 1.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_ramp_sample_positions() {
        // length-2 ramp [0, 1] resized to 3: sample positions are
        // (d + 0.5) * 2/3 - 0.5 = {-1/6, 1/2, 7/6}, clamped at the edges,
        // so the output is [0, 0.5, 1].
        let t = Tensor::from_vec(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let out = resize(&t, 1, 3, ResizeMode::Bilinear).unwrap();
        let expected = [0.0, 0.5, 1.0];
        for (v, e) in out.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn nearest_upscale_repeats_entries() {
        let t = Tensor::from_vec(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let out = resize(&t, 1, 6, ResizeMode::Nearest).unwrap();
        assert_eq!(out.data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn resize_is_linear() {
        let a = random_tensor(6, 6, 1, 10);
        let b = random_tensor(6, 6, 1, 11);
        let combo = a.scale(2.0).add(&b.scale(-0.5)).unwrap();
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
            let lhs = resize(&combo, 4, 9, mode).unwrap();
            let rhs = resize(&a, 4, 9, mode)
                .unwrap()
                .scale(2.0)
                .add(&resize(&b, 4, 9, mode).unwrap().scale(-0.5))
                .unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
