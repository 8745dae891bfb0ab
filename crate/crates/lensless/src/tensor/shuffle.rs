//! Pixel shuffle: lossless space-to-depth rearrangement and its exact
//! inverse. Trades spatial resolution for channels without discarding
//! samples, so the enhancer can operate at reduced resolution.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Space-to-depth: (H, W, C) -> (H/r, W/r, C*r^2). Output channel
/// `c * r^2 + dr * r + dc` holds input pixel offset (dr, dc) of channel `c`.
pub fn pixel_shuffle_down(t: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::invalid("shuffle factor must be >= 1"));
    }
    let (h, w) = t.dims();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::invalid(format!(
            "dims {h}x{w} not divisible by shuffle factor {factor}"
        )));
    }
    let r2 = factor * factor;
    Tensor::from_fn(h / factor, w / factor, t.channels() * r2, |r, c, ch| {
        let base = ch / r2;
        let rem = ch % r2;
        let (dr, dc) = (rem / factor, rem % factor);
        t.get(r * factor + dr, c * factor + dc, base)
    })
}

/// Depth-to-space, exact inverse of [`pixel_shuffle_down`].
pub fn pixel_shuffle_up(t: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::invalid("shuffle factor must be >= 1"));
    }
    let r2 = factor * factor;
    if t.channels() % r2 != 0 {
        return Err(Error::invalid(format!(
            "channel count {} not divisible by factor^2 = {r2}",
            t.channels()
        )));
    }
    let (h, w) = t.dims();
    Tensor::from_fn(h * factor, w * factor, t.channels() / r2, |r, c, ch| {
        let (dr, dc) = (r % factor, c % factor);
        t.get(r / factor, c / factor, ch * r2 + dr * factor + dc)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::test_util::random_tensor;

    #[test]
    fn down_preserves_value_multiset() {
        let t = Tensor::from_fn(4, 4, 1, |r, c, _| (r * 4 + c) as f64).unwrap();
        let down = pixel_shuffle_down(&t, 2).unwrap();
        assert_eq!(down.shape(), (2, 2, 4));
        let mut values: Vec<f64> = down.data().to_vec();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(values, expected);
    }

    #[test]
    fn factor_one_is_identity() {
        let t = random_tensor(3, 5, 2, 6);
        assert_eq!(pixel_shuffle_down(&t, 1).unwrap(), t);
        assert_eq!(pixel_shuffle_up(&t, 1).unwrap(), t);
    }

    #[test]
    fn round_trips_are_bit_exact() {
        let t = random_tensor(4, 6, 3, 12);
        let down = pixel_shuffle_down(&t, 2).unwrap();
        assert_eq!(pixel_shuffle_up(&down, 2).unwrap(), t);

        let deep = random_tensor(2, 2, 8, 13);
        let up = pixel_shuffle_up(&deep, 2).unwrap();
        assert_eq!(pixel_shuffle_down(&up, 2).unwrap(), deep);
    }

    #[test]
    fn divisibility_is_enforced() {
        let t = random_tensor(3, 4, 1, 1);
        assert!(pixel_shuffle_down(&t, 2).is_err());
        let c3 = random_tensor(2, 2, 3, 2);
        assert!(pixel_shuffle_up(&c3, 2).is_err());
    }
}
