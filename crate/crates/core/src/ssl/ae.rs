//! Autoencoder branch: mixed continuous/categorical reconstruction with a
//! constraint-consistency penalty, then freeze–unfreeze fine-tuning.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::{EncoderClassifier, FinetuneConfig, FinetuneEpoch};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::flow::Dataset;
use crate::nn::train::{minibatches, seeded_rng};
use crate::nn::{
    adam_step, log_softmax_row, Activation, AdamConfig, AdamState, LayerSpec, Matrix, MlpModel, LOG_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplies every constraint weight; 0 switches the penalty off.
    pub phi_scale: f64,
    pub finetune: FinetuneConfig,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            latent: 128,
            dropout: 0.1,
            learning_rate: 5e-4,
            weight_decay: 1e-5,
            batch_size: 128,
            epochs: 100,
            phi_scale: 1.0,
            finetune: FinetuneConfig::default(),
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.hidden.iter().any(|&h| h == 0) || self.batch_size == 0 {
            return Err(Error::config("ae widths and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 || !(self.phi_scale >= 0.0) {
            return Err(Error::config("ae learning rate must be positive; weight decay and phi scale ≥ 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("ae dropout must lie in [0, 1)"));
        }
        self.finetune.validate()
    }
}

/// Column layout of an encoded row: continuous values, then one block per
/// categorical field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub continuous: usize,
    pub categorical: Vec<usize>,
}

impl Layout {
    pub fn of(ds: &Dataset) -> Self {
        Self {
            continuous: ds.schema.continuous_indices().len(),
            categorical: ds.schema.categorical_sizes(),
        }
    }

    pub fn width(&self) -> usize {
        self.continuous + self.categorical.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    pub encoder: MlpModel,
    pub decoder: MlpModel,
    pub layout: Layout,
}

impl AeModel {
    pub fn new<R: Rng + ?Sized>(layout: Layout, cfg: &AeConfig, rng: &mut R) -> Result<Self> {
        let width = layout.width();
        let mut enc: Vec<LayerSpec> = cfg
            .hidden
            .iter()
            .map(|&h| LayerSpec::new(h, Activation::Relu).with_dropout(cfg.dropout))
            .collect();
        enc.push(LayerSpec::new(cfg.latent, Activation::Linear));
        let mut dec: Vec<LayerSpec> = cfg
            .hidden
            .iter()
            .rev()
            .map(|&h| LayerSpec::new(h, Activation::Relu).with_dropout(cfg.dropout))
            .collect();
        dec.push(LayerSpec::new(width, Activation::Linear));
        Ok(Self {
            encoder: MlpModel::new(width, &enc, rng)?,
            decoder: MlpModel::new(cfg.latent, &dec, rng)?,
            layout,
        })
    }

    /// Decoder output in inference mode: continuous values then categorical logits.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decoder.predict(&self.encoder.predict(x)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = crate::io::read_json(path)?;
        m.encoder.validate().map_err(|e| e.in_file(path))?;
        m.decoder.validate().map_err(|e| e.in_file(path))?;
        Ok(m)
    }
}

/// Raw-unit view of the standardized continuous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMap {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl UnitMap {
    pub fn of(ds: &Dataset) -> Self {
        match &ds.transform {
            Some(t) => Self {
                mean: t.mean.clone(),
                std: t.std.clone(),
            },
            None => {
                let d = ds.schema.continuous_indices().len();
                Self {
                    mean: vec![0.0; d],
                    std: vec![1.0; d],
                }
            }
        }
    }
}

/// Loss parts of one batch and the gradient on the decoder output.
#[derive(Debug, Clone)]
pub struct AeLoss {
    pub mse: f64,
    pub ce_cat: f64,
    pub cons: f64,
    pub grad: Matrix,
}

impl AeLoss {
    pub fn total(&self) -> f64 {
        self.mse + self.ce_cat + self.cons
    }
}

/// Reconstruction loss of `output` against the encoded `target`.
///
/// MSE is averaged over every continuous entry; each categorical field adds
/// its row-mean cross-entropy; the constraint penalty is evaluated on the
/// reconstruction in raw units, each residual measured in standard
/// deviations of its derived feature.
pub fn ae_loss(output: &Matrix, target: &Matrix, layout: &Layout, cons: &ConstraintSet, units: &UnitMap) -> Result<AeLoss> {
    if output.shape() != target.shape() || output.cols() != layout.width() {
        return Err(Error::dim(format!(
            "reconstruction {:?} vs target {:?} for a {}-wide layout",
            output.shape(),
            target.shape(),
            layout.width()
        )));
    }
    let n = output.rows();
    let dc = layout.continuous;
    let nf = n.max(1) as f64;
    let mut grad = Matrix::zeros(n, output.cols());
    let mut mse = 0.0;
    let count = (n * dc).max(1) as f64;
    for r in 0..n {
        let (o, t) = (output.row(r), target.row(r));
        let g = grad.row_mut(r);
        for j in 0..dc {
            let d = o[j] - t[j];
            mse += d * d;
            g[j] = 2.0 * d / count;
        }
    }
    mse /= count;

    let mut ce_cat = 0.0;
    let mut offset = dc;
    for &size in &layout.categorical {
        for r in 0..n {
            let logp = log_softmax_row(&output.row(r)[offset..offset + size]);
            let t = &target.row(r)[offset..offset + size];
            let g = &mut grad.row_mut(r)[offset..offset + size];
            let active = |k: usize| if logp[k] > LOG_FLOOR { t[k] } else { 0.0 };
            let mass: f64 = (0..size).map(active).sum();
            for k in 0..size {
                ce_cat -= t[k] * logp[k];
                g[k] = (logp[k].exp() * mass - active(k)) / nf;
            }
        }
        offset += size;
    }
    ce_cat /= nf;

    let mut cons_loss = 0.0;
    if !cons.is_empty() && dc > 0 {
        let mut raw = output.columns(0, dc);
        for r in 0..n {
            for (j, v) in raw.row_mut(r).iter_mut().enumerate() {
                *v = *v * units.std[j] + units.mean[j];
            }
        }
        let scales: Vec<f64> = cons.constraints().iter().map(|c| units.std[c.a]).collect();
        let (loss, g_raw) = cons.penalty_scaled(&raw, Some(&scales))?;
        cons_loss = loss;
        for r in 0..n {
            let gr = g_raw.row(r);
            let g = grad.row_mut(r);
            for j in 0..dc {
                g[j] += gr[j] * units.std[j];
            }
        }
    }
    if !(mse.is_finite() && ce_cat.is_finite() && cons_loss.is_finite()) {
        return Err(Error::numeric("non-finite autoencoder loss"));
    }
    Ok(AeLoss {
        mse,
        ce_cat,
        cons: cons_loss,
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeEpoch {
    pub epoch: usize,
    pub mse: f64,
    pub ce_cat: f64,
    pub cons: f64,
}

impl AeEpoch {
    pub fn total(&self) -> f64 {
        self.mse + self.ce_cat + self.cons
    }
}

/// Pretrain on the unlabeled rows of `ds`.
pub fn pretrain(ds: &Dataset, cons: &ConstraintSet, cfg: &AeConfig, seed: u64) -> Result<(AeModel, Vec<AeEpoch>)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::input("autoencoder pretraining needs at least one row"));
    }
    let layout = Layout::of(ds);
    if layout.continuous == 0 {
        return Err(Error::input("autoencoder needs at least one continuous feature"));
    }
    if cons.width() != layout.continuous && !cons.is_empty() {
        return Err(Error::config(format!(
            "constraints cover {} continuous features, data has {}",
            cons.width(),
            layout.continuous
        )));
    }
    let cons = cons.scaled(cfg.phi_scale);
    let units = UnitMap::of(ds);
    let x = ds.encode();
    let mut rng = seeded_rng(seed, 0xae);
    let mut model = AeModel::new(layout, cfg, &mut rng)?;
    let adam = AdamConfig::new(cfg.learning_rate, cfg.weight_decay);
    let mut enc_state = AdamState::new(&model.encoder, adam);
    let mut dec_state = AdamState::new(&model.decoder, adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sums = [0.0; 3];
        for batch in minibatches(x.rows(), cfg.batch_size, &mut rng) {
            let xb = x.select_rows(&batch);
            let (h, enc_cache) = model.encoder.forward(&xb, true, &mut rng)?;
            let (out, dec_cache) = model.decoder.forward(&h, true, &mut rng)?;
            let loss = ae_loss(&out, &xb, &model.layout, &cons, &units)?;
            let w = batch.len() as f64;
            sums[0] += loss.mse * w;
            sums[1] += loss.ce_cat * w;
            sums[2] += loss.cons * w;
            let dec_grads = model.decoder.backward(&dec_cache, &loss.grad)?;
            let enc_grads = model.encoder.backward(&enc_cache, &dec_grads.input)?;
            adam_step(&mut model.decoder, &dec_grads, &mut dec_state)?;
            adam_step(&mut model.encoder, &enc_grads, &mut enc_state)?;
        }
        let n = x.rows() as f64;
        history.push(AeEpoch {
            epoch,
            mse: sums[0] / n,
            ce_cat: sums[1] / n,
            cons: sums[2] / n,
        });
        log::debug!("ae epoch {epoch}: total {:.5}", history[epoch].total());
    }
    Ok((model, history))
}

/// Replace the decoder by a classifier head and fine-tune on labeled rows.
pub fn finetune(
    model: &AeModel,
    ds_s: &Dataset,
    classes: usize,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<(EncoderClassifier, Vec<FinetuneEpoch>)> {
    let labels = ds_s
        .labels
        .as_ref()
        .ok_or_else(|| Error::input("fine-tuning needs ground-truth labels"))?;
    if Layout::of(ds_s) != model.layout {
        return Err(Error::config("labeled data does not match the pretrained feature layout"));
    }
    let mut rng = seeded_rng(seed, 0xaf);
    let mut clf = EncoderClassifier::attach(model.encoder.clone(), classes, &mut rng)?;
    let history = clf.finetune(&ds_s.encode(), labels, cfg, &mut rng)?;
    Ok((clf, history))
}

pub fn write_history(path: &Path, history: &[AeEpoch]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                format!("{:?}", h.mse),
                format!("{:?}", h.ce_cat),
                format!("{:?}", h.cons),
            ]
        })
        .collect();
    crate::io::write_csv_rows(path, &["epoch", "mse", "ce_cat", "cons"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FeatureDef, Schema};

    fn repeated_row(n: usize) -> Dataset {
        let schema = Schema::new(vec![FeatureDef::continuous("a"), FeatureDef::continuous("b")]).unwrap();
        let data = (0..n).flat_map(|_| [0.7, -1.2]).collect();
        Dataset::new(schema, Matrix::from_vec(n, 2, data).unwrap()).unwrap()
    }

    #[test]
    fn memorizes_a_single_point() {
        let ds = repeated_row(32);
        let cfg = AeConfig {
            hidden: vec![16],
            latent: 4,
            dropout: 0.0,
            learning_rate: 1e-2,
            batch_size: 32,
            epochs: 200,
            phi_scale: 0.0,
            ..AeConfig::default()
        };
        let (model, hist) = pretrain(&ds, &ConstraintSet::empty(2), &cfg, 3).unwrap();
        assert!(hist.last().unwrap().mse < 1e-4, "{:?}", hist.last());
        let rec = model.reconstruct(&ds.encode()).unwrap();
        assert!((rec[(0, 0)] - 0.7).abs() < 1e-2);
        assert!(hist.iter().all(|h| h.cons == 0.0));
    }

    #[test]
    fn empty_dataset_is_input_error() {
        let ds = repeated_row(0);
        let err = pretrain(&ds, &ConstraintSet::empty(2), &AeConfig::default(), 1).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn categorical_ce_of_uniform_logits() {
        let layout = Layout {
            continuous: 1,
            categorical: vec![2, 3],
        };
        let out = Matrix::from_rows(&[[0.5, 0.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        let tgt = Matrix::from_rows(&[[0.5, 1.0, 0.0, 0.0, 0.0, 1.0]]).unwrap();
        let units = UnitMap {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let l = ae_loss(&out, &tgt, &layout, &ConstraintSet::empty(1), &units).unwrap();
        assert_eq!(l.mse, 0.0);
        assert!((l.ce_cat - (2f64.ln() + 3f64.ln())).abs() < 1e-12);
    }
}
