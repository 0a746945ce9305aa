use serde::{Deserialize, Serialize};

use super::params::{LayerParams, NetworkParams, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<LayerParams>,
    second: Vec<LayerParams>,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let zeros: Vec<_> = params.layers.iter().map(LayerParams::zeros_like).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

fn shapes_match(a: &[LayerParams], b: &[LayerParams]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_shape(y))
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step(params: &mut NetworkParams, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    if !shapes_match(&params.layers, &grads.layers) || !shapes_match(&params.layers, &state.first) {
        return Err(Error::Shape("optimizer state, gradients and parameters disagree".into()));
    }
    if let Some(pos) = grads.values().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {pos}")));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);

    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        for (((p, g), m), v) in p
            .values_mut()
            .zip(g.values())
            .zip(m.values_mut())
            .zip(v.values_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
