//! Adam optimizer with bias correction and the halving learning-rate
//! schedule.

use crate::error::{Error, Result};

use super::TrainConfig;

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One Adam update at 1-based iteration `t`:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, then the
/// bias-corrected step `p -= lr(t) * m_hat / (sqrt(v_hat) + eps)` with
/// `lr(t)` halved every `lr_halve_every` iterations.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
    t: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("adam iteration counter is 1-based"));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "adam size mismatch: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let lr = config.effective_lr(t);
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    let bias1 = 1.0 - b1.powi(t as i32);
    let bias2 = 1.0 - b2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
    Ok(())
}

/// Positional collection of [`AdamState`]s for a model's parameter list.
#[derive(Debug, Clone, Default)]
pub struct AdamOptimizer {
    states: Vec<AdamState>,
    t: usize,
}

impl AdamOptimizer {
    pub fn new() -> Self {
        AdamOptimizer { states: Vec::new(), t: 0 }
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    /// Applies one update across all parameter tensors. The caller must
    /// pass parameters in the same order every step.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        config: &TrainConfig,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid("parameter/gradient list length mismatch"));
        }
        if self.states.is_empty() {
            self.states = params.iter().map(|p| AdamState::zeros(p.len())).collect();
        }
        if self.states.len() != params.len() {
            return Err(Error::StateError("optimizer state does not match parameter list".into()));
        }
        self.t += 1;
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, config, self.t)?;
        }
        Ok(())
    }
}
