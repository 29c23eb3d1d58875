//! Bias-corrected Adam over flat parameter groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// First and second moments of one parameter group plus its step count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Keeps the rows (of width `stride`) for which `keep[row]` is true.
    pub fn retain_rows(&mut self, stride: usize, keep: &[bool]) {
        let filter = |x: &Vec<f64>| -> Vec<f64> {
            x.chunks_exact(stride)
                .zip(keep)
                .filter(|(_, &k)| k)
                .flat_map(|(c, _)| c.iter().copied())
                .collect()
        };
        self.m = filter(&self.m);
        self.v = filter(&self.v);
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Dimension(format!(
            "Adam: {} parameters, {} gradients, state of {}",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t.min(i32::MAX as u64) as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t.min(i32::MAX as u64) as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
