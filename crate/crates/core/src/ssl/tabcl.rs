//! Contrastive branch for tabular flows.
//!
//! Two views of every anchor are made by replacing a few coordinates with
//! values drawn from rows that currently share the anchor's pseudo-label,
//! then repaired with the constraint projection. A shared encoder feeds two
//! projection heads with their own temperatures; pseudo-labels are refreshed
//! by a linear probe every few epochs.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ae::Layout;
use super::head::{EncoderClassifier, FinetuneConfig, FinetuneEpoch};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::flow::Dataset;
use crate::nn::train::{fit_logistic, minibatches, seeded_rng, LogisticConfig};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, LayerSpec, Matrix, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabclConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub replacement_rate: f64,
    pub tau_cont: f64,
    pub tau_cat: f64,
    pub lambda: f64,
    pub projection_dim: usize,
    pub refresh_interval: usize,
    /// Refreshing stops once fewer than this fraction of labels change.
    pub refresh_tolerance: f64,
    pub max_refresh_rounds: usize,
    pub probe: LogisticConfig,
    pub finetune: FinetuneConfig,
}

impl Default for TabclConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            latent: 64,
            dropout: 0.1,
            learning_rate: 5e-4,
            weight_decay: 1e-5,
            batch_size: 256,
            epochs: 100,
            replacement_rate: 0.15,
            tau_cont: 0.5,
            tau_cat: 0.2,
            lambda: 0.5,
            projection_dim: 128,
            refresh_interval: 10,
            refresh_tolerance: 0.01,
            max_refresh_rounds: 10,
            probe: LogisticConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

impl TabclConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("tabcl: {m}")));
        if !(self.replacement_rate > 0.0 && self.replacement_rate < 1.0) {
            return bad("replacement_rate must lie in (0, 1)");
        }
        if !(self.tau_cont > 0.0 && self.tau_cat > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.latent == 0 || self.projection_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("widths must be positive");
        }
        if self.batch_size == 0 || self.refresh_interval == 0 || !(self.learning_rate > 0.0) {
            return bad("batch size, refresh interval and learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) || self.weight_decay < 0.0 {
            return bad("dropout must lie in [0, 1) and weight decay be ≥ 0");
        }
        self.finetune.validate()
    }

    /// Coordinates replaced per view for `d` features: `⌈r·d⌉`, at least one.
    pub fn replaced_count(&self, d: usize) -> usize {
        replaced_count(self.replacement_rate, d)
    }
}

pub fn replaced_count(r: f64, d: usize) -> usize {
    // the small slack keeps exact products such as 0.2·10 from rounding up
    ((r * d as f64 - 1e-9).ceil().max(1.0) as usize).min(d)
}

/// Current pseudo-labels of the unlabeled rows and the per-class row buckets
/// that define the class-conditional value pools.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelState {
    pub labels: Vec<usize>,
    pub round: usize,
    pub classes: usize,
    buckets: Vec<Vec<usize>>,
}

impl PseudoLabelState {
    pub fn new(labels: Vec<usize>, classes: usize) -> Self {
        let mut s = Self {
            labels: Vec::new(),
            round: 0,
            classes,
            buckets: Vec::new(),
        };
        s.set_labels(labels);
        s
    }

    /// Replace the labels and rebuild the pools. Returns the fraction changed.
    pub fn set_labels(&mut self, labels: Vec<usize>) -> f64 {
        let changed = if self.labels.len() == labels.len() && !labels.is_empty() {
            self.labels.iter().zip(&labels).filter(|(a, b)| a != b).count() as f64 / labels.len() as f64
        } else {
            1.0
        };
        let mut buckets = vec![Vec::new(); self.classes];
        for (i, &y) in labels.iter().enumerate() {
            buckets[y].push(i);
        }
        self.buckets = buckets;
        self.labels = labels;
        changed
    }

    /// Rows whose current label is `class`.
    pub fn bucket(&self, class: usize) -> &[usize] {
        &self.buckets[class]
    }
}

/// Fit a logistic regression on the labeled rows and label every unlabeled row.
pub fn bootstrap(ds_s: &Dataset, ds_l: &Dataset, classes: usize, probe: &LogisticConfig, seed: u64) -> Result<PseudoLabelState> {
    let y = labeled_targets(ds_s, classes)?;
    let model = fit_logistic(&ds_s.encode(), y, classes, probe, seed)?;
    let labels = model.predict_proba(&ds_l.encode())?.argmax_rows();
    Ok(PseudoLabelState::new(labels, classes))
}

fn labeled_targets(ds_s: &Dataset, classes: usize) -> Result<&[usize]> {
    let y = ds_s
        .labels
        .as_deref()
        .ok_or_else(|| Error::input("the labeled set has no label column"))?;
    let mut counts = vec![0usize; classes];
    for &c in y {
        if c >= classes {
            return Err(Error::config(format!("label {c} outside {classes} classes")));
        }
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::config(format!("class {empty} has no labeled samples")));
    }
    Ok(y)
}

/// Two augmented versions of one anchor row.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    /// After replacement, before projection.
    pub replaced: [Vec<f64>; 2],
    /// After projection; these are what the encoder sees.
    pub views: [Vec<f64>; 2],
    pub indices: [Vec<usize>; 2],
    /// Number of coordinates drawn from the marginal pool because the
    /// anchor's class pool was empty.
    pub fallbacks: usize,
}

/// Everything view generation needs, shared read-only across threads.
pub struct ViewContext<'a> {
    /// Schema-ordered rows (standardized continuous values, categorical indices).
    pub data: &'a Matrix,
    pub state: &'a PseudoLabelState,
    pub cons: &'a ConstraintSet,
    pub continuous: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub rate: f64,
}

impl<'a> ViewContext<'a> {
    pub fn new(ds: &'a Dataset, state: &'a PseudoLabelState, cons: &'a ConstraintSet, rate: f64) -> Self {
        let continuous = ds.schema.continuous_indices();
        let (mean, std) = match &ds.transform {
            Some(t) => (t.mean.clone(), t.std.clone()),
            None => (vec![0.0; continuous.len()], vec![1.0; continuous.len()]),
        };
        Self {
            data: &ds.features,
            state,
            cons,
            continuous,
            mean,
            std,
            rate,
        }
    }

    fn project(&self, v: &mut [f64]) {
        if self.cons.is_empty() {
            return;
        }
        let mut cont: Vec<f64> = self.continuous.iter().map(|&c| v[c]).collect();
        self.cons.project_standardized(&mut cont, &self.mean, &self.std);
        for (&c, x) in self.continuous.iter().zip(cont) {
            v[c] = x;
        }
    }

    /// Build the two views of `anchor`.
    pub fn make_views<R: Rng + ?Sized>(&self, anchor: usize, rng: &mut R) -> ViewPair {
        let d = self.data.cols();
        let m = replaced_count(self.rate, d);
        let first = index::sample(rng, d, m).into_vec();
        let second = if d - m >= m {
            let mut rest: Vec<usize> = (0..d).filter(|j| !first.contains(j)).collect();
            rest.shuffle(rng);
            rest.truncate(m);
            rest
        } else {
            index::sample(rng, d, m).into_vec()
        };
        let base = self.data.row(anchor);
        let pool = self.state.bucket(self.state.labels[anchor]);
        let mut fallbacks = 0;
        let mut replace = |idx: &[usize], rng: &mut R| {
            let mut v = base.to_vec();
            for &j in idx {
                let donor = if pool.is_empty() {
                    fallbacks += 1;
                    rng.gen_range(0..self.data.rows())
                } else {
                    pool[rng.gen_range(0..pool.len())]
                };
                v[j] = self.data[(donor, j)];
            }
            v
        };
        let r1 = replace(&first, rng);
        let r2 = replace(&second, rng);
        let (mut v1, mut v2) = (r1.clone(), r2.clone());
        self.project(&mut v1);
        self.project(&mut v2);
        ViewPair {
            replaced: [r1, r2],
            views: [v1, v2],
            indices: [first, second],
            fallbacks,
        }
    }
}

/// Generator for the views of `row` in `epoch`; independent of batching and
/// thread scheduling.
pub fn view_rng(seed: u64, epoch: usize, row: usize) -> ChaCha8Rng {
    let mut rng = seeded_rng(seed ^ (0x7ab_c1u64 << 20) ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), 0);
    rng.set_stream(row as u64);
    rng
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b))
}

/// `−log( e^{sim(v_i,v_j)/τ} / (e^{sim(v_i,v_j)/τ} + Σ_k e^{sim(v_i,n_k)/τ}) )`
/// with cosine similarity.
pub fn nt_xent(v_i: &[f64], v_j: &[f64], negatives: &Matrix, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::config("temperature must be positive"));
    }
    if norm(v_i) == 0.0 || norm(v_j) == 0.0 || negatives.iter_rows().any(|r| norm(r) == 0.0) {
        return Err(Error::numeric("zero-norm vector in contrastive loss"));
    }
    let pos = cosine(v_i, v_j) / tau;
    let logits: Vec<f64> = std::iter::once(pos)
        .chain(negatives.iter_rows().map(|n| cosine(v_i, n) / tau))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    Ok(lse - pos)
}

/// Projections shorter than this are treated as collapsed.
pub const NORM_FLOOR: f64 = 1e-12;

/// Symmetric batch NT-Xent over `2N` anchorings.
///
/// Rows `i` of `v1` and `v2` are the two views of anchor `i`. Every view is
/// a query once; its counterpart is the positive and the other `2N − 2`
/// views are negatives. Returns the mean loss and its gradient with respect
/// to `v1` and `v2`.
pub fn batch_nt_xent(v1: &Matrix, v2: &Matrix, tau: f64) -> Result<(f64, Matrix, Matrix)> {
    if v1.shape() != v2.shape() {
        return Err(Error::dim(format!("views {:?} vs {:?}", v1.shape(), v2.shape())));
    }
    let n = v1.rows();
    let z = v1.vstack(v2)?;
    let m = 2 * n;
    let mut zn = z.clone();
    let mut norms = vec![0.0; m];
    for a in 0..m {
        let l = norm(z.row(a));
        if !l.is_finite() {
            return Err(Error::numeric(format!("projection {a} has a non-finite norm")));
        }
        if l < NORM_FLOOR {
            // a collapsed projection: similarity 0 to everything, no gradient
            norms[a] = f64::INFINITY;
            zn.row_mut(a).fill(0.0);
            continue;
        }
        norms[a] = l;
        for v in zn.row_mut(a) {
            *v /= l;
        }
    }
    let sim = zn.matmul_t(&zn)?;
    let mut loss = 0.0;
    let mut g = Matrix::zeros(m, m);
    for a in 0..m {
        let pos = (a + n) % m;
        let row = sim.row(a);
        let max = (0..m).filter(|&k| k != a).map(|k| row[k] / tau).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for k in 0..m {
            if k != a {
                denom += (row[k] / tau - max).exp();
            }
        }
        loss += denom.ln() + max - row[pos] / tau;
        let gr = g.row_mut(a);
        for k in 0..m {
            if k != a {
                gr[k] = (row[k] / tau - max).exp() / denom;
            }
        }
        gr[pos] -= 1.0;
    }
    let scale = 1.0 / (m as f64 * tau);
    loss /= m as f64;
    // d sim / d zn: sim = zn·znᵀ, so dzn = (G + Gᵀ)·zn
    let mut gs = g.clone();
    let gt = g.transpose();
    gs.add_assign(&gt)?;
    let dzn = gs.matmul(&zn)?;
    let mut dz = Matrix::zeros(m, z.cols());
    for a in 0..m {
        let u = zn.row(a);
        let du = dzn.row(a);
        let dot: f64 = u.iter().zip(du).map(|(x, y)| x * y).sum();
        for (j, out) in dz.row_mut(a).iter_mut().enumerate() {
            *out = scale * (du[j] - u[j] * dot) / norms[a];
        }
    }
    let idx1: Vec<usize> = (0..n).collect();
    let idx2: Vec<usize> = (n..m).collect();
    Ok((loss, dz.select_rows(&idx1), dz.select_rows(&idx2)))
}

/// Per-head losses and their mix `λ·L_cont + (1−λ)·L_cat`.
#[derive(Debug, Clone)]
pub struct DualHeadLoss {
    pub cont: f64,
    pub cat: f64,
    pub total: f64,
    /// Gradients on the (view 1, view 2) projections of each head, already
    /// weighted by the mixing coefficient.
    pub grad_cont: (Matrix, Matrix),
    pub grad_cat: (Matrix, Matrix),
}

pub fn dual_head_loss(
    cont: (&Matrix, &Matrix),
    cat: (&Matrix, &Matrix),
    tau_cont: f64,
    tau_cat: f64,
    lambda: f64,
) -> Result<DualHeadLoss> {
    let (lc, mut gc1, mut gc2) = batch_nt_xent(cont.0, cont.1, tau_cont)?;
    let (lk, mut gk1, mut gk2) = batch_nt_xent(cat.0, cat.1, tau_cat)?;
    gc1.scale(lambda);
    gc2.scale(lambda);
    gk1.scale(1.0 - lambda);
    gk2.scale(1.0 - lambda);
    Ok(DualHeadLoss {
        cont: lc,
        cat: lk,
        total: lambda * lc + (1.0 - lambda) * lk,
        grad_cont: (gc1, gc2),
        grad_cat: (gk1, gk2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabclModel {
    pub encoder: MlpModel,
    pub head_cont: MlpModel,
    pub head_cat: MlpModel,
    pub layout: Layout,
}

impl TabclModel {
    pub fn new<R: Rng + ?Sized>(layout: Layout, cfg: &TabclConfig, rng: &mut R) -> Result<Self> {
        let mut enc: Vec<LayerSpec> = cfg
            .hidden
            .iter()
            .map(|&h| LayerSpec::new(h, Activation::Relu).with_dropout(cfg.dropout))
            .collect();
        enc.push(LayerSpec::new(cfg.latent, Activation::Linear));
        let head = |rng: &mut R| {
            MlpModel::new(
                cfg.latent,
                &[
                    LayerSpec::new(cfg.latent, Activation::Relu),
                    LayerSpec::new(cfg.projection_dim, Activation::Linear),
                ],
                rng,
            )
        };
        Ok(Self {
            encoder: MlpModel::new(layout.width(), &enc, rng)?,
            head_cont: head(rng)?,
            head_cat: head(rng)?,
            layout,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = crate::io::read_json(path)?;
        for part in [&m.encoder, &m.head_cont, &m.head_cat] {
            part.validate().map_err(|e| e.in_file(path))?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabclEpoch {
    pub epoch: usize,
    pub l_cont: f64,
    pub l_cat: f64,
    pub l_tabcl: f64,
    pub refresh_round: usize,
    /// Set on epochs that started with a refresh.
    pub change_fraction: Option<f64>,
}

/// Re-label the unlabeled rows with a linear probe fitted on labeled embeddings.
/// Returns the fraction of labels that changed.
pub fn refresh(
    encoder: &MlpModel,
    ds_s: &Dataset,
    ds_l: &Dataset,
    state: &mut PseudoLabelState,
    probe: &LogisticConfig,
    seed: u64,
) -> Result<f64> {
    let y = labeled_targets(ds_s, state.classes)?;
    let zs = encoder.predict(&ds_s.encode())?;
    let model = fit_logistic(&zs, y, state.classes, probe, seed)?;
    let labels = model.predict_proba(&encoder.predict(&ds_l.encode())?)?.argmax_rows();
    let changed = state.set_labels(labels);
    state.round += 1;
    Ok(changed)
}

/// Contrastive pretraining on the unlabeled rows.
pub fn pretrain(
    ds_l: &Dataset,
    ds_s: &Dataset,
    classes: usize,
    cons: &ConstraintSet,
    cfg: &TabclConfig,
    seed: u64,
) -> Result<(TabclModel, Vec<TabclEpoch>, PseudoLabelState)> {
    cfg.validate()?;
    if ds_l.is_empty() {
        return Err(Error::input("contrastive pretraining needs unlabeled rows"));
    }
    let layout = Layout::of(ds_l);
    if Layout::of(ds_s) != layout {
        return Err(Error::config("labeled and unlabeled data have different schemas"));
    }
    if !cons.is_empty() && cons.width() != layout.continuous {
        return Err(Error::config("constraint set does not match the continuous features"));
    }
    let mut state = bootstrap(ds_s, ds_l, classes, &cfg.probe, seed)?;
    let mut rng = seeded_rng(seed, 0xc1);
    let mut model = TabclModel::new(layout, cfg, &mut rng)?;
    let adam = AdamConfig::new(cfg.learning_rate, cfg.weight_decay);
    let mut enc_state = AdamState::new(&model.encoder, adam);
    let mut cont_state = AdamState::new(&model.head_cont, adam);
    let mut cat_state = AdamState::new(&model.head_cat, adam);
    let mut refreshing = true;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut fallbacks = 0usize;
    for epoch in 0..cfg.epochs {
        let mut change_fraction = None;
        if refreshing && epoch > 0 && epoch % cfg.refresh_interval == 0 && state.round < cfg.max_refresh_rounds {
            let frac = refresh(&model.encoder, ds_s, ds_l, &mut state, &cfg.probe, seed ^ epoch as u64)?;
            log::info!("tabcl refresh {} at epoch {epoch}: {:.4} of labels changed", state.round, frac);
            change_fraction = Some(frac);
            if frac < cfg.refresh_tolerance {
                refreshing = false;
            }
        }
        let ctx = ViewContext::new(ds_l, &state, cons, cfg.replacement_rate);
        let mut sums = [0.0; 3];
        for batch in minibatches(ds_l.len(), cfg.batch_size, &mut rng) {
            if batch.len() < 2 {
                continue;
            }
            let pairs: Vec<ViewPair> = batch
                .par_iter()
                .map(|&i| ctx.make_views(i, &mut view_rng(seed, epoch, i)))
                .collect();
            fallbacks += pairs.iter().map(|p| p.fallbacks).sum::<usize>();
            let rows: Vec<&[f64]> = pairs
                .iter()
                .map(|p| p.views[0].as_slice())
                .chain(pairs.iter().map(|p| p.views[1].as_slice()))
                .collect();
            let x = ds_l.schema.encode(&Matrix::from_rows(&rows)?);
            let n = batch.len();
            let (h, enc_cache) = model.encoder.forward(&x, true, &mut rng)?;
            let (pc, cont_cache) = model.head_cont.forward(&h, true, &mut rng)?;
            let (pk, cat_cache) = model.head_cat.forward(&h, true, &mut rng)?;
            let first: Vec<usize> = (0..n).collect();
            let second: Vec<usize> = (n..2 * n).collect();
            let loss = dual_head_loss(
                (&pc.select_rows(&first), &pc.select_rows(&second)),
                (&pk.select_rows(&first), &pk.select_rows(&second)),
                cfg.tau_cont,
                cfg.tau_cat,
                cfg.lambda,
            )?;
            let w = n as f64;
            sums[0] += loss.cont * w;
            sums[1] += loss.cat * w;
            sums[2] += loss.total * w;
            let gc = loss.grad_cont.0.vstack(&loss.grad_cont.1)?;
            let gk = loss.grad_cat.0.vstack(&loss.grad_cat.1)?;
            let grads_c = model.head_cont.backward(&cont_cache, &gc)?;
            let grads_k = model.head_cat.backward(&cat_cache, &gk)?;
            let mut gh = grads_c.input.clone();
            gh.add_assign(&grads_k.input)?;
            let grads_e = model.encoder.backward(&enc_cache, &gh)?;
            adam_step(&mut model.head_cont, &grads_c, &mut cont_state)?;
            adam_step(&mut model.head_cat, &grads_k, &mut cat_state)?;
            adam_step(&mut model.encoder, &grads_e, &mut enc_state)?;
        }
        let total = ds_l.len() as f64;
        history.push(TabclEpoch {
            epoch,
            l_cont: sums[0] / total,
            l_cat: sums[1] / total,
            l_tabcl: sums[2] / total,
            refresh_round: state.round,
            change_fraction,
        });
    }
    if fallbacks > 0 {
        log::warn!("tabcl: {fallbacks} replacements fell back to the marginal pool");
    }
    Ok((model, history, state))
}

/// Attach a classifier to the pretrained encoder, fine-tune on the labeled
/// rows and pseudo-label the unlabeled ones.
pub fn finetune_and_label(
    encoder: &MlpModel,
    ds_s: &Dataset,
    ds_l: &Dataset,
    classes: usize,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<(EncoderClassifier, Vec<FinetuneEpoch>, Vec<usize>, Matrix)> {
    let labels = ds_s
        .labels
        .as_ref()
        .ok_or_else(|| Error::input("fine-tuning needs ground-truth labels"))?;
    let mut rng = seeded_rng(seed, 0xc2);
    let mut clf = EncoderClassifier::attach(encoder.clone(), classes, &mut rng)?;
    let history = clf.finetune(&ds_s.encode(), labels, cfg, &mut rng)?;
    let (pl, probs) = clf.pseudo_label(&ds_l.encode())?;
    Ok((clf, history, pl, probs))
}

pub fn write_history(path: &Path, history: &[TabclEpoch]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                format!("{:?}", h.l_cont),
                format!("{:?}", h.l_cat),
                format!("{:?}", h.l_tabcl),
                h.refresh_round.to_string(),
                h.change_fraction.map(|c| format!("{c:?}")).unwrap_or_default(),
            ]
        })
        .collect();
    crate::io::write_csv_rows(
        path,
        &["epoch", "l_cont", "l_cat", "l_tabcl", "refresh_round", "change_fraction"],
        &rows,
    )
}
