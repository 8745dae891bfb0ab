//! Desk-scale perceptual enhancer: pixel-shuffle down, a short stack of
//! 3x3 convolutions with leaky ReLU between them, one additive skip
//! connection around the stack, and pixel-shuffle back up. With all conv
//! weights at zero the enhancer is exactly the identity, which makes
//! inversion-only ablations trivial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv2d, leaky_relu, pixel_shuffle_down, pixel_shuffle_up, Tensor};

/// One convolution layer: a bank of odd-sized kernels plus one bias per
/// output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernels: Vec<Tensor>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(kernels: Vec<Tensor>, bias: Vec<f64>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::invalid("conv layer needs at least one kernel"));
        }
        if kernels.len() != bias.len() {
            return Err(Error::invalid("one bias per kernel required"));
        }
        let (kh, kw) = kernels[0].dims();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid("kernels must be odd-sized"));
        }
        for k in &kernels {
            if k.dims() != (kh, kw) || k.channels() != kernels[0].channels() {
                return Err(Error::invalid("kernels in a layer must share shape"));
            }
        }
        Ok(ConvLayer { kernels, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.kernels[0].channels()
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.len()
    }

    fn same_pad(&self) -> usize {
        self.kernels[0].height() / 2
    }
}

/// Weights of the enhancer stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerWeights {
    pub layers: Vec<ConvLayer>,
    pub shuffle_factor: usize,
    pub leaky_slope: f64,
}

impl EnhancerWeights {
    pub fn new(layers: Vec<ConvLayer>, shuffle_factor: usize, leaky_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("enhancer needs at least one conv layer"));
        }
        if shuffle_factor == 0 {
            return Err(Error::invalid("shuffle factor must be >= 1"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels() != pair[1].in_channels() {
                return Err(Error::invalid("consecutive layer channel counts are incompatible"));
            }
        }
        let first = layers[0].in_channels();
        let last = layers.last().expect("nonempty").out_channels();
        if first != last {
            return Err(Error::invalid(
                "the skip connection requires matching stack input/output channels",
            ));
        }
        Ok(EnhancerWeights { layers, shuffle_factor, leaky_slope })
    }

    /// All-zero conv stack: the enhancer starts as the identity map.
    pub fn zero_init(
        image_channels: usize,
        shuffle_factor: usize,
        hidden: usize,
        conv_layers: usize,
        kernel: usize,
        leaky_slope: f64,
    ) -> Result<Self> {
        Self::build(image_channels, shuffle_factor, hidden, conv_layers, kernel, leaky_slope, None)
    }

    /// Small random conv weights (seeded); biases start at zero.
    pub fn random_init(
        image_channels: usize,
        shuffle_factor: usize,
        hidden: usize,
        conv_layers: usize,
        kernel: usize,
        leaky_slope: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::build(
            image_channels,
            shuffle_factor,
            hidden,
            conv_layers,
            kernel,
            leaky_slope,
            Some(seed),
        )
    }

    fn build(
        image_channels: usize,
        shuffle_factor: usize,
        hidden: usize,
        conv_layers: usize,
        kernel: usize,
        leaky_slope: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        if conv_layers == 0 || hidden == 0 {
            return Err(Error::invalid("enhancer needs >= 1 layer and >= 1 hidden channel"));
        }
        let stack_io = image_channels * shuffle_factor * shuffle_factor;
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let mut layers = Vec::with_capacity(conv_layers);
        for i in 0..conv_layers {
            let in_ch = if i == 0 { stack_io } else { hidden };
            let out_ch = if i + 1 == conv_layers { stack_io } else { hidden };
            let fan_in = (kernel * kernel * in_ch) as f64;
            let scale = (2.0 / fan_in).sqrt() * 0.1;
            let kernels = (0..out_ch)
                .map(|_| {
                    Tensor::from_fn(kernel, kernel, in_ch, |_, _, _| match rng.as_mut() {
                        Some(r) => r.gen_range(-scale..scale),
                        None => 0.0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push(ConvLayer::new(kernels, vec![0.0; out_ch])?);
        }
        EnhancerWeights::new(layers, shuffle_factor, leaky_slope)
    }
}

pub(crate) struct EnhancerTape {
    /// Shuffled input (the skip source).
    pub(crate) shuffled: Tensor,
    /// Input to each conv layer.
    pub(crate) layer_inputs: Vec<Tensor>,
    /// Pre-activation output of each conv layer.
    pub(crate) pre_activations: Vec<Tensor>,
}

/// Enhancer forward pass: shuffle down, conv stack with leaky ReLU
/// between layers (the last layer is linear), add the skip, shuffle up.
pub fn enhance(weights: &EnhancerWeights, x: &Tensor) -> Result<Tensor> {
    Ok(enhance_with_tape(weights, x)?.0)
}

pub(crate) fn enhance_with_tape(
    weights: &EnhancerWeights,
    x: &Tensor,
) -> Result<(Tensor, EnhancerTape)> {
    let shuffled = pixel_shuffle_down(x, weights.shuffle_factor)?;
    if weights.layers[0].in_channels() != shuffled.channels() {
        return Err(Error::invalid(format!(
            "enhancer expects {} channels after shuffle, got {}",
            weights.layers[0].in_channels(),
            shuffled.channels()
        )));
    }
    let mut layer_inputs = Vec::with_capacity(weights.layers.len());
    let mut pre_activations = Vec::with_capacity(weights.layers.len());
    let mut h = shuffled.clone();
    let last = weights.layers.len() - 1;
    for (i, layer) in weights.layers.iter().enumerate() {
        layer_inputs.push(h.clone());
        let mut z = conv2d(&h, &layer.kernels, 1, layer.same_pad())?;
        z = add_bias(&z, &layer.bias)?;
        pre_activations.push(z.clone());
        h = if i == last { z } else { leaky_relu(&z, weights.leaky_slope)? };
    }
    let residual = h.add(&shuffled)?;
    let out = pixel_shuffle_up(&residual, weights.shuffle_factor)?;
    Ok((out, EnhancerTape { shuffled, layer_inputs, pre_activations }))
}

pub(crate) fn add_bias(t: &Tensor, bias: &[f64]) -> Result<Tensor> {
    if bias.len() != t.channels() {
        return Err(Error::invalid("bias length must match channels"));
    }
    Tensor::from_fn(t.height(), t.width(), t.channels(), |r, c, ch| t.get(r, c, ch) + bias[ch])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::test_util::{random_tensor, rel_err};

    #[test]
    fn zero_init_is_identity() {
        let w = EnhancerWeights::zero_init(3, 2, 8, 4, 3, 0.01).unwrap();
        let x = random_tensor(8, 8, 3, 1);
        let out = enhance(&w, &x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn single_identity_kernel_factor_one() {
        let mut kernel = Tensor::zeros(1, 1, 1).unwrap();
        kernel.set(0, 0, 0, 1.0);
        let layer = ConvLayer::new(vec![kernel], vec![0.0]).unwrap();
        let w = EnhancerWeights::new(vec![layer], 1, 0.01).unwrap();
        let x = random_tensor(5, 5, 1, 2);
        // stack output = x, skip adds x again
        let out = enhance(&w, &x).unwrap();
        let doubled = x.scale(2.0);
        assert!(rel_err(out.data(), doubled.data()) < 1e-15);
    }

    #[test]
    fn matches_layer_by_layer_oracle() {
        let w = EnhancerWeights::random_init(1, 2, 4, 3, 3, 0.05, 42).unwrap();
        let x = random_tensor(8, 8, 1, 3);
        let fast = enhance(&w, &x).unwrap();

        // composed naive path: shuffle, conv+bias, leaky, ..., skip, unshuffle
        let d = pixel_shuffle_down(&x, 2).unwrap();
        let mut h = d.clone();
        for (i, layer) in w.layers.iter().enumerate() {
            let z = add_bias(&conv2d(&h, &layer.kernels, 1, 1).unwrap(), &layer.bias).unwrap();
            h = if i + 1 == w.layers.len() { z } else { leaky_relu(&z, 0.05).unwrap() };
        }
        let slow = pixel_shuffle_up(&h.add(&d).unwrap(), 2).unwrap();
        assert!(rel_err(fast.data(), slow.data()) < 1e-14);
    }

    #[test]
    fn dim_violations_are_rejected() {
        let w = EnhancerWeights::zero_init(3, 2, 8, 2, 3, 0.01).unwrap();
        let odd = random_tensor(7, 8, 3, 4);
        assert!(enhance(&w, &odd).is_err());
        let wrong_channels = random_tensor(8, 8, 2, 5);
        assert!(enhance(&w, &wrong_channels).is_err());
    }

    #[test]
    fn mismatched_stack_channels_rejected() {
        let k1 = Tensor::zeros(3, 3, 4).unwrap();
        let k2 = Tensor::zeros(3, 3, 8).unwrap();
        let l1 = ConvLayer::new(vec![k1; 6], vec![0.0; 6]).unwrap();
        let l2 = ConvLayer::new(vec![k2; 4], vec![0.0; 4]).unwrap();
        assert!(EnhancerWeights::new(vec![l1, l2], 2, 0.01).is_err());
    }
}
