use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{Gradients, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// First/second moments for every parameter of one model.
///
/// Weight decay is the coupled L2 form: `g ← g + λθ` before the moment update.
/// Bias correction uses a per-layer step count so a layer that was frozen for
/// a while starts from a correctly corrected first step when it is unfrozen.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    layer_steps: Vec<u64>,
    m_w: Vec<Matrix>,
    v_w: Vec<Matrix>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let layers = model.layers();
        Self {
            config,
            step: 0,
            layer_steps: vec![0; layers.len()],
            m_w: layers
                .iter()
                .map(|l| Matrix::zeros(l.input_width(), l.output_width()))
                .collect(),
            v_w: layers
                .iter()
                .map(|l| Matrix::zeros(l.input_width(), l.output_width()))
                .collect(),
            m_b: layers.iter().map(|l| vec![0.0; l.output_width()]).collect(),
            v_b: layers.iter().map(|l| vec![0.0; l.output_width()]).collect(),
        }
    }
}

/// Apply one Adam update to every trainable layer of `model`.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let n = model.layers().len();
    if grads.weights.len() != n || grads.biases.len() != n || state.m_w.len() != n {
        return Err(Error::dim("gradient set does not match model layers"));
    }
    for (i, layer) in model.layers().iter().enumerate() {
        if !layer.trainable {
            continue;
        }
        if grads.weights[i].shape() != layer.weight.shape()
            || grads.biases[i].len() != layer.bias.len()
        {
            return Err(Error::dim(format!("gradient shape mismatch at layer {i}")));
        }
        if !grads.weights[i].is_finite() || grads.biases[i].iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient in layer {i}")));
        }
    }

    state.step += 1;
    let cfg = state.config;
    for (i, layer) in model.layers_for_update().iter_mut().enumerate() {
        if !layer.trainable {
            continue;
        }
        state.layer_steps[i] += 1;
        let t = state.layer_steps[i] as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            let g = g + cfg.weight_decay * *theta;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        };
        for (((theta, &g), m), v) in layer
            .weight
            .data_mut()
            .iter_mut()
            .zip(grads.weights[i].data())
            .zip(state.m_w[i].data_mut())
            .zip(state.v_w[i].data_mut())
        {
            update(theta, g, m, v);
        }
        for (((theta, &g), m), v) in layer
            .bias
            .iter_mut()
            .zip(&grads.biases[i])
            .zip(&mut state.m_b[i])
            .zip(&mut state.v_b[i])
        {
            update(theta, g, m, v);
        }
    }
    model.bump_version();
    Ok(())
}
