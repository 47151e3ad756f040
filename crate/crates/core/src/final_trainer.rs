//! Final classifier trained on weighted pseudo-labels with a label-smoothed
//! symmetric cross-entropy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Dataset;
use crate::nn::train::{minibatches, seeded_rng};
use crate::nn::{adam_step, softmax, Activation, AdamConfig, AdamState, Matrix, MlpModel, LOG_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceConfig {
    /// Forward cross-entropy coefficient.
    pub alpha: f64,
    /// Reverse cross-entropy coefficient.
    pub beta: f64,
    /// Label smoothing of the targets.
    pub smoothing: f64,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Also train on the labeled seed set (weight 1).
    pub include_seed_set: bool,
    /// Use the dataset's weight column; otherwise every row counts fully.
    pub use_weights: bool,
}

impl Default for SceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 2.0,
            smoothing: 0.1,
            hidden: vec![512, 256, 128],
            dropout: 0.3,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 50,
            weight_decay: 1e-5,
            include_seed_set: false,
            use_weights: true,
        }
    }
}

impl SceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::config("final: alpha and beta must be non-negative with a positive sum"));
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0) {
            return Err(Error::config("final: smoothing must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("final: dropout must lie in [0, 1)"));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::config("final: batch size and learning rate must be positive"));
        }
        Ok(())
    }
}

/// Smoothed target: `1 − ε` on the label, `ε/(K−1)` elsewhere.
pub fn smoothed_target(label: usize, classes: usize, eps: f64) -> Vec<f64> {
    let off = eps / (classes - 1) as f64;
    (0..classes).map(|k| if k == label { 1.0 - eps } else { off }).collect()
}

/// Weighted symmetric cross-entropy on probabilities.
///
/// Per row `w·[α·CE(p, ŷ) + β·RCE(ŷ, p)]`, averaged over the row count. The
/// returned gradient is with respect to the logits that produced `probs`
/// through a softmax.
pub fn sce_loss(probs: &Matrix, labels: &[usize], weights: &[f64], cfg: &SceConfig) -> Result<(f64, Matrix)> {
    let (n, k) = probs.shape();
    if labels.len() != n || weights.len() != n {
        return Err(Error::dim(format!(
            "{n} rows, {} labels, {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if k < 2 {
        return Err(Error::dim("symmetric cross-entropy needs at least two classes"));
    }
    if !probs.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::numeric("non-finite probabilities or weights"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::config(format!("label {bad} outside {k} classes")));
    }
    let eps = cfg.smoothing;
    let log_on = (1.0 - eps).ln();
    let log_off = (eps / (k - 1) as f64).ln();
    let scale = 1.0 / n.max(1) as f64;
    let mut grad = Matrix::zeros(n, k);
    let mut loss = 0.0;
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let p = probs.row(i);
        let y = labels[i];
        let t = |c: usize| if c == y { 1.0 - eps } else { eps / (k - 1) as f64 };
        let lt = |c: usize| if c == y { log_on } else { log_off };
        let mut ce = 0.0;
        let mut rce = 0.0;
        for c in 0..k {
            ce -= t(c) * p[c].ln().max(LOG_FLOOR);
            rce -= p[c] * lt(c);
        }
        loss += w * (cfg.alpha * ce + cfg.beta * rce);
        // d(−Σ p_m log ŷ_m)/dz_c = −p_c (log ŷ_c − Σ_m p_m log ŷ_m)
        let mean_lt: f64 = (0..k).map(|c| p[c] * lt(c)).sum();
        let g = grad.row_mut(i);
        for c in 0..k {
            let d_ce = p[c] - t(c);
            let d_rce = -p[c] * (lt(c) - mean_lt);
            g[c] = scale * w * (cfg.alpha * d_ce + cfg.beta * d_rce);
        }
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite symmetric cross-entropy"));
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

pub fn build_classifier(input: usize, classes: usize, cfg: &SceConfig, seed: u64) -> Result<MlpModel> {
    let mut rng = seeded_rng(seed, 0xf1);
    MlpModel::mlp(input, &cfg.hidden, classes, Activation::Softmax, cfg.dropout, &mut rng)
}

/// Train a fresh classifier on encoded rows. Missing weights count as 1.
pub fn train_final(
    x: &Matrix,
    labels: &[usize],
    weights: Option<&[f64]>,
    classes: usize,
    cfg: &SceConfig,
    seed: u64,
) -> Result<(MlpModel, Vec<FinalEpoch>)> {
    cfg.validate()?;
    if x.rows() != labels.len() {
        return Err(Error::dim(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!("label {bad} but the classifier has {classes} classes")));
    }
    let ones;
    let weights = match weights {
        Some(w) if w.len() != labels.len() => {
            return Err(Error::dim(format!("{} weights for {} rows", w.len(), labels.len())))
        }
        Some(w) => w,
        None => {
            log::warn!("no sample weights given; training with all weights 1");
            ones = vec![1.0; labels.len()];
            &ones
        }
    };
    let mut model = build_classifier(x.cols(), classes, cfg, seed)?;
    let mut rng = seeded_rng(seed, 0xf2);
    let mut state = AdamState::new(&model, AdamConfig::new(cfg.learning_rate, cfg.weight_decay));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut correct = 0usize;
        for batch in minibatches(x.rows(), cfg.batch_size, &mut rng) {
            let xb = x.select_rows(&batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let wb: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
            let (logits, cache) = model.forward(&xb, true, &mut rng)?;
            correct += logits.argmax_rows().iter().zip(&yb).filter(|(p, y)| p == y).count();
            let (loss, grad) = sce_loss(&softmax(&logits), &yb, &wb, cfg)?;
            total += loss * batch.len() as f64;
            let grads = model.backward(&cache, &grad)?;
            adam_step(&mut model, &grads, &mut state)?;
        }
        let n = x.rows().max(1) as f64;
        history.push(FinalEpoch {
            epoch,
            loss: total / n,
            train_accuracy: correct as f64 / n,
        });
    }
    Ok((model, history))
}

/// Train on a pseudo-labeled dataset, using its weight column when present.
pub fn train_final_dataset(ds: &Dataset, classes: usize, cfg: &SceConfig, seed: u64) -> Result<(MlpModel, Vec<FinalEpoch>)> {
    let labels = ds
        .pseudo_labels
        .as_ref()
        .or(ds.labels.as_ref())
        .ok_or_else(|| Error::input("dataset has neither pseudo-labels nor labels"))?;
    let weights = if cfg.use_weights { ds.weights.as_deref() } else { None };
    train_final(&ds.encode(), labels, weights, classes, cfg, seed)
}

/// Argmax labels (lowest index on ties) and class probabilities.
pub fn predict(model: &MlpModel, x: &Matrix) -> Result<(Vec<usize>, Matrix)> {
    crate::ssl::head::pseudo_label(|m| model.predict_proba(m), x)
}

pub fn write_history(path: &Path, history: &[FinalEpoch]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| vec![h.epoch.to_string(), format!("{:?}", h.loss), format!("{:?}", h.train_accuracy)])
        .collect();
    crate::io::write_csv_rows(path, &["epoch", "loss", "train_accuracy"], &rows)
}

/// Predictions as `row_id,prediction,p_0,…`.
pub fn write_predictions(path: &Path, labels: &[usize], probs: &Matrix) -> Result<()> {
    let mut header = vec!["row_id".to_string(), "prediction".to_string()];
    header.extend((0..probs.cols()).map(|k| format!("p_{k}")));
    let rows: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let mut r = vec![i.to_string(), y.to_string()];
            r.extend(probs.row(i).iter().map(|p| format!("{p:?}")));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    crate::io::write_csv_rows(path, &header, &rows)
}

/// Read the `prediction` column of a predictions file.
pub fn read_predictions(path: &Path) -> Result<Vec<usize>> {
    let text = crate::io::read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let col = r
        .headers()
        .map_err(|e| Error::Format(e.to_string()).in_file(path))?
        .iter()
        .position(|h| h == "prediction")
        .ok_or_else(|| Error::Format("missing `prediction` column".into()).in_file(path))?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::Format(e.to_string()).in_file(path))?;
            rec[col]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad prediction `{}`", i + 2, &rec[col])).in_file(path))
        })
        .collect()
}
