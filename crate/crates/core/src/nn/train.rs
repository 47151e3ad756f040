//! Small training utilities shared by the classifiers in this crate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, one_hot, softmax_ce_loss, Activation, AdamConfig, AdamState, Matrix, MlpModel};
use crate::error::{Error, Result};

/// Deterministic generator for a named sub-stream of a seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffled mini-batches covering `0..n`; the last partial batch is kept.
pub fn minibatches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// Settings for fitting a softmax classifier with Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

/// Multinomial logistic regression settings (a single softmax layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 128,
            learning_rate: 0.02,
            weight_decay: 1e-4,
        }
    }
}

impl LogisticConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
        }
    }
}

/// Train `model` (softmax output) on hard labels with per-sample weights.
///
/// Returns the mean training loss of each epoch.
pub fn fit_classifier<R: Rng + ?Sized>(
    model: &mut MlpModel,
    inputs: &Matrix,
    labels: &[usize],
    weights: Option<&[f64]>,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if inputs.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} rows but {} labels",
            inputs.rows(),
            labels.len()
        )));
    }
    let classes = model.output_width();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!(
            "label {bad} outside the {classes} classifier outputs"
        )));
    }
    let mut state = AdamState::new(model, AdamConfig::new(cfg.learning_rate, cfg.weight_decay));
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in minibatches(inputs.rows(), cfg.batch_size, rng) {
            let x = inputs.select_rows(&batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let w: Vec<f64> = match weights {
                Some(ws) => batch.iter().map(|&i| ws[i]).collect(),
                None => vec![1.0; batch.len()],
            };
            let (logits, cache) = model.forward(&x, true, rng)?;
            let (loss, grad) = softmax_ce_loss(&logits, &one_hot(&y, classes), &w)?;
            let grads = model.backward(&cache, &grad)?;
            adam_step(model, &grads, &mut state)?;
            total += loss * batch.len() as f64;
        }
        history.push(total / inputs.rows().max(1) as f64);
    }
    Ok(history)
}

/// Fit a fresh multinomial logistic regression.
pub fn fit_logistic(
    inputs: &Matrix,
    labels: &[usize],
    classes: usize,
    cfg: &LogisticConfig,
    seed: u64,
) -> Result<MlpModel> {
    let mut rng = seeded_rng(seed, 0x10);
    let mut model = MlpModel::mlp(inputs.cols(), &[], classes, Activation::Softmax, 0.0, &mut rng)?;
    fit_classifier(&mut model, inputs, labels, None, &cfg.fit_config(), &mut rng)?;
    Ok(model)
}
