//! Freeze–unfreeze fine-tuning of a pretrained encoder with a fresh softmax
//! head, and top-1 pseudo-labeling. Shared by both self-supervised branches.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::train::minibatches;
use crate::nn::{adam_step, one_hot, softmax_ce_loss, Activation, AdamConfig, AdamState, Matrix, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    /// Leading epochs during which only the head is trained.
    pub frozen_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            frozen_epochs: 8,
            batch_size: 64,
            learning_rate: 5e-4,
            weight_decay: 1e-5,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs > 0 && self.frozen_epochs >= self.epochs {
            return Err(Error::config(format!(
                "frozen_epochs ({}) must be below the fine-tune epochs ({})",
                self.frozen_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::config("fine-tune batch size and learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub frozen: bool,
    pub loss: f64,
    pub train_accuracy: f64,
}

/// An encoder with a softmax classification head on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderClassifier {
    pub encoder: MlpModel,
    pub head: MlpModel,
}

impl EncoderClassifier {
    /// Attach a freshly initialised linear softmax head with `classes` outputs.
    pub fn attach<R: Rng + ?Sized>(encoder: MlpModel, classes: usize, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config("a classifier needs at least two classes"));
        }
        let head = MlpModel::mlp(encoder.output_width(), &[], classes, Activation::Softmax, 0.0, rng)?;
        Ok(Self { encoder, head })
    }

    pub fn classes(&self) -> usize {
        self.head.output_width()
    }

    /// Class probabilities in inference mode.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.head.predict_proba(&self.encoder.predict(x)?)
    }

    /// Train on labeled rows: `frozen_epochs` with the encoder fixed, then
    /// everything jointly.
    pub fn finetune<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        cfg: &FinetuneConfig,
        rng: &mut R,
    ) -> Result<Vec<FinetuneEpoch>> {
        self.finetune_observed(x, labels, cfg, rng, |_, _| {})
    }

    /// [`finetune`](Self::finetune) with a callback after every epoch.
    pub fn finetune_observed<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        cfg: &FinetuneConfig,
        rng: &mut R,
        mut observe: impl FnMut(&FinetuneEpoch, &Self),
    ) -> Result<Vec<FinetuneEpoch>> {
        cfg.validate()?;
        let k = self.classes();
        if x.rows() != labels.len() {
            return Err(Error::dim(format!("{} rows but {} labels", x.rows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::config(format!("label {bad} but the classifier head has {k} classes")));
        }
        if x.rows() == 0 && cfg.epochs > 0 {
            return Err(Error::input("no labeled rows to fine-tune on"));
        }
        let adam = AdamConfig::new(cfg.learning_rate, cfg.weight_decay);
        let mut head_state = AdamState::new(&self.head, adam);
        let mut enc_state = AdamState::new(&self.encoder, adam);
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let frozen = epoch < cfg.frozen_epochs;
            self.encoder.set_trainable(!frozen);
            let mut total = 0.0;
            let mut correct = 0usize;
            for batch in minibatches(x.rows(), cfg.batch_size, rng) {
                let xb = x.select_rows(&batch);
                let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let (z, enc_cache) = if frozen {
                    (self.encoder.predict(&xb)?, None)
                } else {
                    let (z, c) = self.encoder.forward(&xb, true, rng)?;
                    (z, Some(c))
                };
                let (logits, head_cache) = self.head.forward(&z, true, rng)?;
                correct += logits.argmax_rows().iter().zip(&yb).filter(|(p, y)| p == y).count();
                let (loss, grad) = softmax_ce_loss(&logits, &one_hot(&yb, k), &vec![1.0; yb.len()])?;
                total += loss * yb.len() as f64;
                let head_grads = self.head.backward(&head_cache, &grad)?;
                if let Some(c) = enc_cache {
                    let enc_grads = self.encoder.backward(&c, &head_grads.input)?;
                    adam_step(&mut self.encoder, &enc_grads, &mut enc_state)?;
                }
                adam_step(&mut self.head, &head_grads, &mut head_state)?;
            }
            let record = FinetuneEpoch {
                epoch,
                frozen,
                loss: total / x.rows() as f64,
                train_accuracy: correct as f64 / x.rows() as f64,
            };
            observe(&record, self);
            history.push(record);
        }
        self.encoder.set_trainable(true);
        Ok(history)
    }

    /// Top-1 labels and probabilities for every row (see [`pseudo_label`]).
    pub fn pseudo_label(&self, x: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        pseudo_label(|chunk| self.predict_proba(chunk), x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = crate::io::read_json(path)?;
        m.encoder.validate().map_err(|e| e.in_file(path))?;
        m.head.validate().map_err(|e| e.in_file(path))?;
        if m.encoder.output_width() != m.head.input_width() {
            return Err(Error::dim("encoder and head widths differ").in_file(path));
        }
        Ok(m)
    }
}

const INFER_CHUNK: usize = 2048;

/// Run `proba` over row chunks in parallel and take the row argmax, lowest
/// index on ties. Results are placed by row index, so the output does not
/// depend on the thread count.
pub fn pseudo_label<F>(proba: F, x: &Matrix) -> Result<(Vec<usize>, Matrix)>
where
    F: Fn(&Matrix) -> Result<Matrix> + Sync,
{
    let starts: Vec<usize> = (0..x.rows()).step_by(INFER_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s| {
            let idx: Vec<usize> = (s..(s + INFER_CHUNK).min(x.rows())).collect();
            proba(&x.select_rows(&idx))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut probs = match parts.first() {
        Some(p) => Matrix::zeros(0, p.cols()),
        None => return Ok((Vec::new(), Matrix::zeros(0, 0))),
    };
    for p in &parts {
        probs = probs.vstack(p)?;
    }
    Ok((probs.argmax_rows(), probs))
}

pub fn write_finetune_history(path: &Path, history: &[FinetuneEpoch]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                if h.frozen { "frozen" } else { "joint" }.to_string(),
                format!("{:?}", h.loss),
                format!("{:?}", h.train_accuracy),
            ]
        })
        .collect();
    crate::io::write_csv_rows(path, &["epoch", "phase", "loss", "train_accuracy"], &rows)
}
