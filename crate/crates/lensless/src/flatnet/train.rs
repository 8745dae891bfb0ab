//! End-to-end training: model pipeline, dataset plumbing, the mini-batch
//! Adam loop, and evaluation helpers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{mse, psnr, weighted_total};
use crate::tensor::Tensor;

use super::adam::AdamOptimizer;
use super::backward::{backward, Gradients, Tape, TapeInner};
use super::enhancer::{enhance_with_tape, EnhancerWeights};
use super::{
    invert_gen_with_tape, invert_sep_with_tape, GenInversionWeights, SepInversionWeights,
    TrainConfig,
};

/// Separable pipeline: matrix-pair inversion plus optional enhancer.
#[derive(Debug, Clone)]
pub struct SepModel {
    pub weights: SepInversionWeights,
    pub enhancer: Option<EnhancerWeights>,
    pub leaky_slope: f64,
}

/// General (Fourier-domain) pipeline, optionally preceded by the
/// pad-and-window preprocessing for cropped measurements.
#[derive(Debug, Clone)]
pub struct GenModel {
    pub weights: GenInversionWeights,
    pub enhancer: Option<EnhancerWeights>,
    pub recon_rows: usize,
    pub recon_cols: usize,
    pub cropped: bool,
    pub window_sigma: f64,
}

/// A trainable reconstruction pipeline.
#[derive(Debug, Clone)]
pub enum Model {
    Sep(SepModel),
    Gen(GenModel),
}

impl Model {
    pub fn enhancer(&self) -> Option<&EnhancerWeights> {
        match self {
            Model::Sep(m) => m.enhancer.as_ref(),
            Model::Gen(m) => m.enhancer.as_ref(),
        }
    }

    /// Reconstruction without recording a tape.
    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_tape(y)?.0)
    }

    pub(crate) fn forward_with_tape(&self, y: &Tensor) -> Result<(Tensor, Tape)> {
        match self {
            Model::Sep(m) => {
                let (interm, inv_tape) = invert_sep_with_tape(&m.weights, y, m.leaky_slope)?;
                match &m.enhancer {
                    Some(e) => {
                        let (out, etape) = enhance_with_tape(e, &interm)?;
                        Ok((out, Tape(TapeInner::Sep { inversion: inv_tape, enhancer: Some(etape) })))
                    }
                    None => Ok((interm, Tape(TapeInner::Sep { inversion: inv_tape, enhancer: None }))),
                }
            }
            Model::Gen(m) => {
                let (interm, inv_tape) = invert_gen_with_tape(
                    &m.weights,
                    y,
                    m.recon_rows,
                    m.recon_cols,
                    m.cropped,
                    m.window_sigma,
                )?;
                match &m.enhancer {
                    Some(e) => {
                        let (out, etape) = enhance_with_tape(e, &interm)?;
                        Ok((out, Tape(TapeInner::Gen { inversion: inv_tape, enhancer: Some(etape) })))
                    }
                    None => Ok((interm, Tape(TapeInner::Gen { inversion: inv_tape, enhancer: None }))),
                }
            }
        }
    }

    /// Mutable views of every parameter tensor, in the canonical order
    /// shared with [`grad_slices`].
    pub(crate) fn param_slices(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        match self {
            Model::Sep(m) => {
                out.push(m.weights.w1.as_mut_slice());
                out.push(m.weights.w2.as_mut_slice());
                out.push(m.weights.channel_mix.as_mut_slice());
                if let Some(e) = &mut m.enhancer {
                    push_enhancer_params(e, &mut out);
                }
            }
            Model::Gen(m) => {
                out.push(m.weights.w.data_mut());
                out.push(m.weights.channel_mix.as_mut_slice());
                if let Some(e) = &mut m.enhancer {
                    push_enhancer_params(e, &mut out);
                }
            }
        }
        out
    }
}

fn push_enhancer_params<'a>(e: &'a mut EnhancerWeights, out: &mut Vec<&'a mut [f64]>) {
    for layer in &mut e.layers {
        for k in &mut layer.kernels {
            out.push(k.data_mut());
        }
        out.push(layer.bias.as_mut_slice());
    }
}

/// Gradient views in the same canonical order as
/// [`Model::param_slices`].
pub(crate) fn grad_slices(grads: &Gradients) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    if let Some(m) = &grads.w1 {
        out.push(m.as_slice());
    }
    if let Some(m) = &grads.w2 {
        out.push(m.as_slice());
    }
    if let Some(t) = &grads.w {
        out.push(t.data());
    }
    out.push(grads.channel_mix.as_slice());
    if let Some(e) = &grads.enhancer {
        for (kernels, bias) in &e.layers {
            for k in kernels {
                out.push(k.data());
            }
            out.push(bias.as_slice());
        }
    }
    out
}

/// One measurement/ground-truth pair.
#[derive(Debug, Clone)]
pub struct Sample {
    pub measurement: Tensor,
    pub target: Tensor,
}

/// An in-memory training or evaluation set.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// An additional differentiable loss term plugged into the weighted
/// total objective.
pub trait LossTerm {
    /// Returns the loss value and its gradient with respect to the
    /// prediction.
    fn eval(&self, prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)>;
}

/// Outcome of [`train`]: the per-iteration loss trace and periodic model
/// snapshots (iteration, cloned model).
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub loss_log: Vec<f64>,
    pub snapshots: Vec<(usize, Model)>,
}

/// Mini-batch Adam training of the full pipeline on a weighted loss.
///
/// The objective is `lambda1 * MSE` plus `lambda2, lambda3, ...` times
/// any supplied extra terms. Batches are drawn by seeded epoch shuffling,
/// per-sample gradients are averaged, and the run aborts if the loss
/// stops being finite. `snapshot_every = 0` disables snapshots.
pub fn train(
    model: &mut Model,
    dataset: &Dataset,
    config: &TrainConfig,
    extra_terms: &[Box<dyn LossTerm>],
    snapshot_every: usize,
) -> Result<TrainResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let weights = [config.lambda1, config.lambda2, config.lambda3];
    if extra_terms.len() + 1 > weights.len() {
        return Err(Error::invalid(format!(
            "{} loss terms configured but only {} weights available",
            extra_terms.len() + 1,
            weights.len()
        )));
    }
    let term_weights = &weights[..extra_terms.len() + 1];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n; // forces an initial shuffle
    let mut optimizer = AdamOptimizer::new();
    let mut loss_log = Vec::with_capacity(config.iterations);
    let mut snapshots = Vec::new();

    for iteration in 1..=config.iterations {
        let mut batch_loss = 0.0;
        let mut accum = Gradients::zeros_for(model)?;
        for _ in 0..config.batch_size {
            if cursor >= n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let sample = &dataset.samples[order[cursor]];
            cursor += 1;

            let (prediction, tape) = model.forward_with_tape(&sample.measurement)?;
            let mut terms = vec![mse(&prediction, &sample.target)?];
            for term in extra_terms {
                terms.push(term.eval(&prediction, &sample.target)?);
            }
            let (loss, upstream) = weighted_total(&terms, term_weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            batch_loss += loss;
            accum.add_assign(&backward(model, &tape, &upstream)?)?;
        }
        accum.scale_assign(1.0 / config.batch_size as f64);
        batch_loss /= config.batch_size as f64;

        {
            let grad_views = grad_slices(&accum);
            let mut param_views = model.param_slices();
            optimizer.step(&mut param_views, &grad_views, config)?;
        }
        loss_log.push(batch_loss);

        if snapshot_every > 0 && (iteration % snapshot_every == 0 || iteration == config.iterations)
        {
            snapshots.push((iteration, model.clone()));
        }
    }
    Ok(TrainResult { loss_log, snapshots })
}

/// Mean PSNR of the model's reconstructions over a sample set.
pub fn mean_test_psnr(model: &Model, samples: &[Sample], peak: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let mut total = 0.0;
    for s in samples {
        let rec = model.forward(&s.measurement)?;
        total += psnr(&rec, &s.target, peak)?;
    }
    Ok(total / samples.len() as f64)
}
