//! Analytic gradients for every trainable parameter class.
//!
//! For the separable inversion, with `G = upstream .* f'(pre-activation)`:
//! `dL/dW1 = sum_c G_c (Y_c W2)^T` and `dL/dW2 = sum_c (W1 Y_c)^T G_c`.
//! For the Fourier-domain inversion the filter gradient is the circular
//! correlation `dL/dW = F^-1( F(G_embedded) .* conj(F(pad(Y))) )`.
//! Convolution, bias, and channel-mix gradients follow standard
//! backpropagation. Every formula here is pinned by finite-difference
//! tests over all parameter classes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{
    embed_center, fft2, hadamard, ifft2, leaky_relu_grad, pixel_shuffle_down, pixel_shuffle_up,
    Tensor,
};

use super::enhancer::EnhancerTape;
use super::train::Model;
use super::{EnhancerWeights, GenInversionWeights, GenTape, SepInversionWeights, SepTape};

/// Gradients for all weights of a [`Model`], mirroring its structure.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Option<DMatrix<f64>>,
    pub w2: Option<DMatrix<f64>>,
    pub w: Option<Tensor>,
    pub channel_mix: DMatrix<f64>,
    pub enhancer: Option<EnhancerGrads>,
}

/// Per-layer kernel and bias gradients.
#[derive(Debug, Clone)]
pub struct EnhancerGrads {
    pub layers: Vec<(Vec<Tensor>, Vec<f64>)>,
}

impl Gradients {
    /// Zero gradients shaped like the model's parameters.
    pub fn zeros_for(model: &Model) -> Result<Gradients> {
        let (w1, w2, w, channel_mix) = match model {
            Model::Sep(m) => (
                Some(DMatrix::zeros(m.weights.w1.nrows(), m.weights.w1.ncols())),
                Some(DMatrix::zeros(m.weights.w2.nrows(), m.weights.w2.ncols())),
                None,
                DMatrix::zeros(m.weights.channel_mix.nrows(), m.weights.channel_mix.ncols()),
            ),
            Model::Gen(m) => {
                let (h, w_) = m.weights.w.dims();
                (
                    None,
                    None,
                    Some(Tensor::zeros(h, w_, 1)?),
                    DMatrix::zeros(m.weights.channel_mix.nrows(), m.weights.channel_mix.ncols()),
                )
            }
        };
        let enhancer = model.enhancer().map(|e| EnhancerGrads {
            layers: e
                .layers
                .iter()
                .map(|l| {
                    let ks = l
                        .kernels
                        .iter()
                        .map(|k| Tensor::zeros(k.height(), k.width(), k.channels()).expect("dims"))
                        .collect();
                    (ks, vec![0.0; l.bias.len()])
                })
                .collect(),
        });
        Ok(Gradients { w1, w2, w, channel_mix, enhancer })
    }

    /// Accumulates `other`, used for per-sample gradient accumulation
    /// within a batch.
    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        match (&mut self.w1, &other.w1) {
            (Some(a), Some(b)) => *a += b,
            (None, None) => {}
            _ => return Err(Error::StateError("gradient structure mismatch (w1)".into())),
        }
        match (&mut self.w2, &other.w2) {
            (Some(a), Some(b)) => *a += b,
            (None, None) => {}
            _ => return Err(Error::StateError("gradient structure mismatch (w2)".into())),
        }
        match (&mut self.w, &other.w) {
            (Some(a), Some(b)) => *a = a.add(b)?,
            (None, None) => {}
            _ => return Err(Error::StateError("gradient structure mismatch (w)".into())),
        }
        self.channel_mix += &other.channel_mix;
        match (&mut self.enhancer, &other.enhancer) {
            (Some(a), Some(b)) => {
                for ((ka, ba), (kb, bb)) in a.layers.iter_mut().zip(&b.layers) {
                    for (x, y) in ka.iter_mut().zip(kb) {
                        *x = x.add(y)?;
                    }
                    for (x, y) in ba.iter_mut().zip(bb) {
                        *x += y;
                    }
                }
            }
            (None, None) => {}
            _ => return Err(Error::StateError("gradient structure mismatch (enhancer)".into())),
        }
        Ok(())
    }

    pub fn scale_assign(&mut self, factor: f64) {
        if let Some(m) = &mut self.w1 {
            *m *= factor;
        }
        if let Some(m) = &mut self.w2 {
            *m *= factor;
        }
        if let Some(t) = &mut self.w {
            *t = t.scale(factor);
        }
        self.channel_mix *= factor;
        if let Some(e) = &mut self.enhancer {
            for (ks, bs) in &mut e.layers {
                for k in ks.iter_mut() {
                    *k = k.scale(factor);
                }
                for b in bs.iter_mut() {
                    *b *= factor;
                }
            }
        }
    }
}

/// Forward-pass record needed by [`backward`]; opaque to callers.
pub struct Tape(pub(crate) TapeInner);

pub(crate) enum TapeInner {
    Sep { inversion: SepTape, enhancer: Option<EnhancerTape> },
    Gen { inversion: GenTape, enhancer: Option<EnhancerTape> },
}

/// Propagates `dL/dX_out` back through the recorded pipeline and returns
/// gradients for every trainable parameter.
pub fn backward(model: &Model, tape: &Tape, upstream: &Tensor) -> Result<Gradients> {
    match (model, &tape.0) {
        (Model::Sep(m), TapeInner::Sep { inversion, enhancer }) => {
            let (egrads, up) =
                enhancer_stage_backward(m.enhancer.as_ref(), enhancer.as_ref(), upstream)?;
            let (w1, w2, mix) = sep_backward(&m.weights, inversion, &up)?;
            Ok(Gradients { w1: Some(w1), w2: Some(w2), w: None, channel_mix: mix, enhancer: egrads })
        }
        (Model::Gen(m), TapeInner::Gen { inversion, enhancer }) => {
            let (egrads, up) =
                enhancer_stage_backward(m.enhancer.as_ref(), enhancer.as_ref(), upstream)?;
            let (w, mix) = gen_backward(&m.weights, inversion, &up)?;
            Ok(Gradients { w1: None, w2: None, w: Some(w), channel_mix: mix, enhancer: egrads })
        }
        _ => Err(Error::StateError("tape does not match the model it was recorded for".into())),
    }
}

fn enhancer_stage_backward(
    weights: Option<&EnhancerWeights>,
    tape: Option<&EnhancerTape>,
    upstream: &Tensor,
) -> Result<(Option<EnhancerGrads>, Tensor)> {
    match (weights, tape) {
        (Some(w), Some(t)) => {
            let (grads, dinput) = enhancer_backward(w, t, upstream)?;
            Ok((Some(grads), dinput))
        }
        (None, None) => Ok((None, upstream.clone())),
        _ => Err(Error::StateError("enhancer tape missing for an enhancer model".into())),
    }
}

/// Gradients of the separable inversion. `upstream` is `dL/d(mix output)`.
fn sep_backward(
    weights: &SepInversionWeights,
    tape: &SepTape,
    upstream: &Tensor,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (dmix, dact) = channel_mix_backward(&weights.channel_mix, &tape.activated, upstream)?;
    let mut dw1 = DMatrix::zeros(weights.w1.nrows(), weights.w1.ncols());
    let mut dw2 = DMatrix::zeros(weights.w2.nrows(), weights.w2.ncols());
    for ch in 0..tape.pre.channels() {
        let (p, q) = tape.pre.dims();
        let g = DMatrix::from_fn(p, q, |r, c| {
            dact.get(r, c, ch) * leaky_relu_grad(tape.pre.get(r, c, ch), tape.slope)
        });
        dw1 += &g * tape.yw2[ch].transpose();
        dw2 += tape.w1y[ch].transpose() * &g;
    }
    Ok((dw1, dw2, dmix))
}

/// Gradient of the Fourier-domain filter: for each channel the upstream
/// gradient is zero-embedded back to the padded grid and circularly
/// correlated with the stored (padded) measurement.
fn gen_backward(
    weights: &GenInversionWeights,
    tape: &GenTape,
    upstream: &Tensor,
) -> Result<(Tensor, DMatrix<f64>)> {
    let (dmix, dplanes) =
        channel_mix_backward(&weights.channel_mix, &tape.cropped_planes, upstream)?;
    let (wh, ww) = weights.w.dims();
    let mut dw = Tensor::zeros(wh, ww, 1)?;
    for ch in 0..dplanes.channels() {
        let g = embed_center(&dplanes.channel(ch)?, wh, ww)?;
        let spec = hadamard(&fft2(&g)?, &tape.y_spectra[ch].conj())?;
        dw = dw.add(&ifft2(&spec)?)?;
    }
    Ok((dw, dmix))
}

/// Shared channel-mix backward: returns (dL/dmix, dL/dpre-mix-activations).
fn channel_mix_backward(
    mix: &DMatrix<f64>,
    activations: &Tensor,
    upstream: &Tensor,
) -> Result<(DMatrix<f64>, Tensor)> {
    if upstream.dims() != activations.dims() || upstream.channels() != mix.nrows() {
        return Err(Error::StateError(format!(
            "upstream shape {:?} does not match recorded activations {:?} with {} mix rows",
            upstream.shape(),
            activations.shape(),
            mix.nrows()
        )));
    }
    let mut dmix = DMatrix::zeros(mix.nrows(), mix.ncols());
    for out_ch in 0..mix.nrows() {
        for in_ch in 0..mix.ncols() {
            let mut acc = 0.0;
            for r in 0..activations.height() {
                for c in 0..activations.width() {
                    acc += upstream.get(r, c, out_ch) * activations.get(r, c, in_ch);
                }
            }
            dmix[(out_ch, in_ch)] = acc;
        }
    }
    let dact = Tensor::from_fn(
        activations.height(),
        activations.width(),
        activations.channels(),
        |r, c, in_ch| {
            (0..mix.nrows()).map(|o| mix[(o, in_ch)] * upstream.get(r, c, o)).sum()
        },
    )?;
    Ok((dmix, dact))
}

/// Backward through the enhancer. Returns per-layer gradients and
/// `dL/d(enhancer input)`.
fn enhancer_backward(
    weights: &EnhancerWeights,
    tape: &EnhancerTape,
    upstream: &Tensor,
) -> Result<(EnhancerGrads, Tensor)> {
    if tape.layer_inputs.len() != weights.layers.len() {
        return Err(Error::StateError("enhancer tape layer count mismatch".into()));
    }
    // adjoint of pixel_shuffle_up is pixel_shuffle_down (pure permutation)
    let g_residual = pixel_shuffle_down(upstream, weights.shuffle_factor)?;
    let mut g = g_residual.clone();
    let last = weights.layers.len() - 1;
    let mut layer_grads = vec![None; weights.layers.len()];
    for i in (0..weights.layers.len()).rev() {
        if i != last {
            g = g.zip_map(&tape.pre_activations[i], |gv, pre| {
                gv * leaky_relu_grad(pre, weights.leaky_slope)
            })?;
        }
        let (dk, db, dx) = conv2d_backward(
            &tape.layer_inputs[i],
            &weights.layers[i].kernels,
            weights.layers[i].kernels[0].height() / 2,
            &g,
        )?;
        layer_grads[i] = Some((dk, db));
        g = dx;
    }
    // skip connection: the shuffled input feeds both the stack and the sum
    let dshuffled = g.add(&g_residual)?;
    let dinput = pixel_shuffle_up(&dshuffled, weights.shuffle_factor)?;
    let grads = EnhancerGrads {
        layers: layer_grads.into_iter().map(|g| g.expect("filled in reverse pass")).collect(),
    };
    Ok((grads, dinput))
}

/// Standard stride-1 convolution backward: gradients for the kernel bank,
/// the biases, and the layer input.
fn conv2d_backward(
    input: &Tensor,
    kernels: &[Tensor],
    pad: usize,
    gout: &Tensor,
) -> Result<(Vec<Tensor>, Vec<f64>, Tensor)> {
    let (h, w) = input.dims();
    let (kh, kw) = kernels[0].dims();
    if gout.dims() != (h + 2 * pad - kh + 1, w + 2 * pad - kw + 1)
        || gout.channels() != kernels.len()
    {
        return Err(Error::StateError("conv backward shape mismatch".into()));
    }
    let (oh, ow) = gout.dims();

    let mut dbias = vec![0.0; kernels.len()];
    for k in 0..kernels.len() {
        for u in 0..oh {
            for v in 0..ow {
                dbias[k] += gout.get(u, v, k);
            }
        }
    }

    let mut dkernels = Vec::with_capacity(kernels.len());
    for k in 0..kernels.len() {
        let mut dk = Tensor::zeros(kh, kw, input.channels())?;
        for a in 0..kh {
            for b in 0..kw {
                for ch in 0..input.channels() {
                    let mut acc = 0.0;
                    for u in 0..oh {
                        let ir = u as isize + a as isize - pad as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        for v in 0..ow {
                            let ic = v as isize + b as isize - pad as isize;
                            if ic < 0 || ic >= w as isize {
                                continue;
                            }
                            acc += gout.get(u, v, k) * input.get(ir as usize, ic as usize, ch);
                        }
                    }
                    dk.set(a, b, ch, acc);
                }
            }
        }
        dkernels.push(dk);
    }

    let mut dinput = Tensor::zeros(h, w, input.channels())?;
    for (k, kernel) in kernels.iter().enumerate() {
        for u in 0..oh {
            for v in 0..ow {
                let gv = gout.get(u, v, k);
                if gv == 0.0 {
                    continue;
                }
                for a in 0..kh {
                    let ir = u as isize + a as isize - pad as isize;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    for b in 0..kw {
                        let ic = v as isize + b as isize - pad as isize;
                        if ic < 0 || ic >= w as isize {
                            continue;
                        }
                        for ch in 0..input.channels() {
                            let cur = dinput.get(ir as usize, ic as usize, ch);
                            dinput.set(
                                ir as usize,
                                ic as usize,
                                ch,
                                cur + gv * kernel.get(a, b, ch),
                            );
                        }
                    }
                }
            }
        }
    }
    Ok((dkernels, dbias, dinput))
}
