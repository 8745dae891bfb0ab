//! Dense real/complex array operations: the numeric substrate for the
//! simulation and reconstruction pipeline.
//!
//! A [`Tensor`] is a row-major, channel-last H×W×C array of `f64`. All
//! operations are pure: they borrow their inputs and return fresh values.

pub(crate) mod conv;
pub(crate) mod fft;
pub mod mat;
mod resize;
mod shuffle;

pub use conv::{conv2d, gaussian_blur, smoothed_box_window};
pub use fft::{fft2, hadamard, ifft2, ComplexSpectrum};
pub use resize::{resize, ResizeMode};
pub use shuffle::{pixel_shuffle_down, pixel_shuffle_up};

use crate::error::{Error, Result};

/// Dense real-valued H×W×C array, row-major, channel-last.
///
/// Invariants: `data.len() == height * width * channels` and every value is
/// finite. Constructors and numerically risky operations enforce both.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from row-major, channel-last data.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite value {bad} in tensor data")));
        }
        Ok(Tensor { height, width, channels, data })
    }

    /// All-zero tensor.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::check_dims(height, width, channels)?;
        Ok(Tensor { height, width, channels, data: vec![0.0; height * width * channels] })
    }

    /// Tensor filled with a single value.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        let mut t = Self::zeros(height, width, channels)?;
        if !value.is_finite() {
            return Err(Error::numeric(format!("non-finite fill value {value}")));
        }
        t.data.fill(value);
        Ok(t)
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` at every index.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut t = Self::zeros(height, width, channels)?;
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    t.data[(r * width + c) * channels + ch] = f(r, c, ch);
                }
            }
        }
        t.ensure_finite("from_fn")?;
        Ok(t)
    }

    fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "tensor dims must be >= 1, got {height}x{width}x{channels}"
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric(format!("{context} produced non-finite values")))
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// (height, width) pair.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width && channel < self.channels);
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width && channel < self.channels);
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    /// Returns a single channel as a 1-channel tensor.
    pub fn channel(&self, channel: usize) -> Result<Tensor> {
        if channel >= self.channels {
            return Err(Error::invalid(format!(
                "channel {channel} out of range for {} channels",
                self.channels
            )));
        }
        Tensor::from_fn(self.height, self.width, 1, |r, c, _| self.get(r, c, channel))
    }

    /// Stacks 1-channel tensors of identical dims into one multi-channel tensor.
    pub fn stack_channels(planes: &[Tensor]) -> Result<Tensor> {
        let first = planes
            .first()
            .ok_or_else(|| Error::invalid("stack_channels needs at least one plane"))?;
        let (h, w) = first.dims();
        for p in planes {
            if p.dims() != (h, w) || p.channels != 1 {
                return Err(Error::invalid("stack_channels requires equal-size 1-channel planes"));
            }
        }
        Tensor::from_fn(h, w, planes.len(), |r, c, ch| planes[ch].get(r, c, 0))
    }

    /// Applies `f` elementwise.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Tensor, mut f: impl FnMut(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Elementwise combination where a 1-channel `other` broadcasts
    /// across all channels of `self`.
    pub fn zip_map_broadcast(
        &self,
        other: &Tensor,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if other.channels() == self.channels {
            return self.zip_map(other, f);
        }
        if other.channels() != 1 || other.dims() != self.dims() {
            return Err(Error::invalid(format!(
                "broadcast shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .enumerate()
                .map(|(i, &a)| f(a, other.data[i / self.channels]))
                .collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Leaky rectified linear unit: `x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu(t: &Tensor, slope: f64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&slope) && slope != 1.0 {
        return Err(Error::invalid(format!("leaky_relu slope must be in [0, 1], got {slope}")));
    }
    Ok(t.map(|v| if v >= 0.0 { v } else { slope * v }))
}

/// Derivative of [`leaky_relu`] evaluated at the pre-activation value.
pub(crate) fn leaky_relu_grad(pre: f64, slope: f64) -> f64 {
    if pre >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Replicate-pads a tensor: edge values are repeated outward, the interior
/// is bit-identical to the input.
pub fn pad_replicate(t: &Tensor, top: usize, bottom: usize, left: usize, right: usize) -> Tensor {
    let (h, w) = t.dims();
    let out_h = h + top + bottom;
    let out_w = w + left + right;
    let mut out = Tensor::zeros(out_h, out_w, t.channels()).expect("padded dims are positive");
    for r in 0..out_h {
        let sr = r.saturating_sub(top).min(h - 1);
        for c in 0..out_w {
            let sc = c.saturating_sub(left).min(w - 1);
            for ch in 0..t.channels() {
                out.set(r, c, ch, t.get(sr, sc, ch));
            }
        }
    }
    out
}

/// Offsets that center an `inner`-long span inside an `outer`-long one.
///
/// The leading offset takes the extra sample when the margin is odd, so that
/// `crop_center` undoes a centered pad exactly.
pub(crate) fn centered_offset(outer: usize, inner: usize) -> usize {
    debug_assert!(inner <= outer);
    (outer - inner + 1) / 2
}

/// Extracts the centered `out_h` x `out_w` window. For an odd margin the
/// extra row/column is removed from the top/left and kept at the bottom/right.
pub fn crop_center(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w) = t.dims();
    if out_h > h || out_w > w {
        return Err(Error::invalid(format!(
            "crop {out_h}x{out_w} exceeds input {h}x{w}"
        )));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("crop dims must be >= 1"));
    }
    let r0 = centered_offset(h, out_h);
    let c0 = centered_offset(w, out_w);
    Tensor::from_fn(out_h, out_w, t.channels(), |r, c, ch| t.get(r0 + r, c0 + c, ch))
}

/// Embeds a convolution kernel on an `out_h` x `out_w` grid with its
/// center pixel `(kh/2, kw/2)` wrapped to the origin (the ifftshift
/// placement). Deconvolving with the resulting spectrum aligns the
/// recovered scene with [`crop_center`]: the scene lands exactly in the
/// centered window of the padded grid.
pub fn embed_kernel_origin(kernel: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (kh, kw) = kernel.dims();
    if kh > out_h || kw > out_w {
        return Err(Error::invalid(format!(
            "kernel {kh}x{kw} larger than target grid {out_h}x{out_w}"
        )));
    }
    let (cr, cc) = (kh / 2, kw / 2);
    let mut out = Tensor::zeros(out_h, out_w, kernel.channels())?;
    for a in 0..kh {
        let r = (a + out_h - cr) % out_h;
        for b in 0..kw {
            let c = (b + out_w - cc) % out_w;
            for ch in 0..kernel.channels() {
                out.set(r, c, ch, kernel.get(a, b, ch));
            }
        }
    }
    Ok(out)
}

/// Embeds `t` centered inside a zero tensor of `out_h` x `out_w`, inverse
/// of [`crop_center`].
pub fn embed_center(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w) = t.dims();
    if out_h < h || out_w < w {
        return Err(Error::invalid(format!(
            "embed target {out_h}x{out_w} smaller than input {h}x{w}"
        )));
    }
    let r0 = centered_offset(out_h, h);
    let c0 = centered_offset(out_w, w);
    let mut out = Tensor::zeros(out_h, out_w, t.channels())?;
    for r in 0..h {
        for c in 0..w {
            for ch in 0..t.channels() {
                out.set(r0 + r, c0 + c, ch, t.get(r, c, ch));
            }
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length_and_nan() {
        assert!(Tensor::from_vec(2, 2, 1, vec![1.0; 3]).is_err());
        assert!(Tensor::from_vec(1, 2, 1, vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::zeros(0, 4, 1).is_err());
    }

    #[test]
    fn leaky_relu_definition() {
        let t = Tensor::from_vec(1, 3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        let out = leaky_relu(&t, 0.01).unwrap();
        assert_eq!(out.data(), &[-0.01, 0.0, 2.0]);

        // slope 1 is the identity on any input
        let id = leaky_relu(&t, 1.0).unwrap();
        assert_eq!(id.data(), t.data());

        // all-positive input is untouched
        let pos = Tensor::from_vec(1, 2, 1, vec![0.5, 3.0]).unwrap();
        assert_eq!(leaky_relu(&pos, 0.2).unwrap().data(), pos.data());
    }

    #[test]
    fn pad_replicate_identity_and_edges() {
        let t = Tensor::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let same = pad_replicate(&t, 0, 0, 0, 0);
        assert_eq!(same, t);

        // single value spreads everywhere
        let one = Tensor::from_vec(1, 1, 1, vec![7.0]).unwrap();
        let p = pad_replicate(&one, 1, 1, 1, 1);
        assert_eq!(p.shape(), (3, 3, 1));
        assert!(p.data().iter().all(|&v| v == 7.0));

        // left-edge replication only
        let l = pad_replicate(&t, 0, 0, 1, 0);
        assert_eq!(l.data(), &[1.0, 1.0, 2.0, 3.0, 3.0, 4.0]);
    }

    #[test]
    fn crop_center_index_arithmetic() {
        let t = Tensor::from_fn(4, 4, 1, |r, c, _| (r * 4 + c) as f64).unwrap();
        let full = crop_center(&t, 4, 4).unwrap();
        assert_eq!(full, t);

        let c = crop_center(&t, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);

        assert!(crop_center(&t, 5, 2).is_err());
    }

    #[test]
    fn crop_undoes_pad() {
        let t = Tensor::from_fn(3, 5, 2, |r, c, ch| (r * 31 + c * 7 + ch) as f64).unwrap();
        let padded = pad_replicate(&t, 2, 2, 2, 2);
        let back = crop_center(&padded, 3, 5).unwrap();
        assert_eq!(back, t);

        // embed/crop are mutual inverses, odd margins included
        let emb = embed_center(&t, 6, 8).unwrap();
        assert_eq!(crop_center(&emb, 3, 5).unwrap(), t);
    }
}
