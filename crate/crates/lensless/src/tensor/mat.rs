//! Conversions between [`Tensor`] channels and `nalgebra` matrices, used
//! wherever the math is naturally matrix algebra (separable models,
//! learned inversion weights, SVD solves).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Copies one channel of a tensor into a dense matrix.
pub fn channel_to_matrix(t: &Tensor, channel: usize) -> Result<DMatrix<f64>> {
    if channel >= t.channels() {
        return Err(Error::invalid(format!(
            "channel {channel} out of range for {} channels",
            t.channels()
        )));
    }
    Ok(DMatrix::from_fn(t.height(), t.width(), |r, c| t.get(r, c, channel)))
}

/// Stacks per-channel matrices back into a tensor.
pub fn matrices_to_tensor(planes: &[DMatrix<f64>]) -> Result<Tensor> {
    let first = planes
        .first()
        .ok_or_else(|| Error::invalid("matrices_to_tensor needs at least one plane"))?;
    for p in planes {
        if p.shape() != first.shape() {
            return Err(Error::invalid("matrices_to_tensor requires equal shapes"));
        }
    }
    Tensor::from_fn(first.nrows(), first.ncols(), planes.len(), |r, c, ch| planes[ch][(r, c)])
}

/// Single-channel tensor from a matrix.
pub fn matrix_to_tensor(m: &DMatrix<f64>) -> Result<Tensor> {
    matrices_to_tensor(std::slice::from_ref(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = crate::tensor::test_util::random_tensor(3, 4, 2, 5);
        let m0 = channel_to_matrix(&t, 0).unwrap();
        let m1 = channel_to_matrix(&t, 1).unwrap();
        let back = matrices_to_tensor(&[m0, m1]).unwrap();
        assert_eq!(back, t);
    }
}
