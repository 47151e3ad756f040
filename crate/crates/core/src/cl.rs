//! Confident learning over pseudo-labels.
//!
//! Out-of-fold probabilities give each row a self-confidence; per-class
//! quantile thresholds and MAD scales turn it into a smooth weight in
//! `[w_min, 1]`; the soft confident joint estimates each class's clean
//! fraction, and a per-class rescaling pulls the retained weight mass toward
//! that fraction.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::train::{fit_classifier, fit_logistic, seeded_rng, FitConfig, LogisticConfig};
use crate::nn::{Activation, Matrix, MlpModel};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    /// Order statistic at rank `⌈q·n⌉` (at least 1).
    NearestRank,
    /// Linear interpolation between the neighbouring order statistics.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseModel {
    Logistic,
    Mlp,
}

/// Small MLP alternative for the out-of-fold model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpBaseConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
}

impl Default for MlpBaseConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            dropout: 0.2,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClConfig {
    pub folds: usize,
    pub q: f64,
    pub w_min: f64,
    pub gamma: f64,
    pub eps_sigma: f64,
    pub eps_mass: f64,
    pub quantile: QuantileMethod,
    pub base: BaseModel,
    pub logistic: LogisticConfig,
    pub mlp: MlpBaseConfig,
}

impl Default for ClConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            q: 0.70,
            w_min: 0.20,
            gamma: 4.0,
            eps_sigma: 1e-6,
            eps_mass: 1e-9,
            quantile: QuantileMethod::NearestRank,
            base: BaseModel::Logistic,
            logistic: LogisticConfig::default(),
            mlp: MlpBaseConfig::default(),
        }
    }
}

impl ClConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("cl: {m}")));
        if self.folds < 2 {
            return bad("at least two folds are needed");
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad("q must lie in [0, 1]");
        }
        if !(self.w_min > 0.0 && self.w_min < 1.0) {
            return bad("w_min must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.eps_sigma > 0.0 && self.eps_mass > 0.0) {
            return bad("gamma, eps_sigma and eps_mass must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OosProbabilities {
    pub probs: Matrix,
    pub folds: Vec<usize>,
    pub self_confidence: Vec<f64>,
    pub fold_count: usize,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// the dealing position carrying over from one class to the next.
pub fn stratified_folds(labels: &[usize], classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded_rng(seed, 0xf0);
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

/// Out-of-fold class probabilities for every row.
pub fn oos_probs(x: &Matrix, labels: &[usize], classes: usize, cfg: &ClConfig, seed: u64) -> Result<OosProbabilities> {
    cfg.validate()?;
    if classes < 2 {
        return Err(Error::input("confident learning needs at least two classes"));
    }
    if x.rows() != labels.len() {
        return Err(Error::dim(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::input(format!("label {bad} outside {classes} classes")));
    }
    if x.rows() < 2 {
        return Err(Error::input("confident learning needs at least two rows"));
    }
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let smallest = counts.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
    let fold_count = cfg.folds.min(smallest).max(2);
    if fold_count < cfg.folds {
        log::warn!(
            "smallest class has {smallest} rows; using {fold_count} folds instead of {}",
            cfg.folds
        );
    }
    let folds = stratified_folds(labels, classes, fold_count, seed);
    let parts: Vec<(Vec<usize>, Matrix)> = (0..fold_count)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..x.rows()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..x.rows()).filter(|&i| folds[i] == f).collect();
            let xt = x.select_rows(&train);
            let yt: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let fold_seed = seed.wrapping_add(0x100 + f as u64);
            let model = fit_base(&xt, &yt, classes, cfg, fold_seed)?;
            Ok((test.clone(), model.predict_proba(&x.select_rows(&test))?))
        })
        .collect::<Result<_>>()?;
    let mut probs = Matrix::zeros(x.rows(), classes);
    for (rows, p) in parts {
        for (j, &i) in rows.iter().enumerate() {
            probs.row_mut(i).copy_from_slice(p.row(j));
        }
    }
    let self_confidence = labels.iter().enumerate().map(|(i, &y)| probs[(i, y)]).collect();
    Ok(OosProbabilities {
        probs,
        folds,
        self_confidence,
        fold_count,
    })
}

fn fit_base(x: &Matrix, y: &[usize], classes: usize, cfg: &ClConfig, seed: u64) -> Result<MlpModel> {
    match cfg.base {
        BaseModel::Logistic => fit_logistic(x, y, classes, &cfg.logistic, seed),
        BaseModel::Mlp => {
            let m = &cfg.mlp;
            let mut rng = seeded_rng(seed, 0x11);
            let mut model = MlpModel::mlp(x.cols(), &m.hidden, classes, Activation::Softmax, m.dropout, &mut rng)?;
            let fit = FitConfig {
                epochs: m.epochs,
                batch_size: m.batch_size,
                learning_rate: m.learning_rate,
                weight_decay: m.weight_decay,
            };
            fit_classifier(&mut model, x, y, None, &fit, &mut rng)?;
            Ok(model)
        }
    }
}

/// Order statistic at rank `⌈q·n⌉`, the rank floored to 1.
pub fn nearest_rank_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Interpolates between order statistics at position `q·(n−1)`.
pub fn linear_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median of sorted values; the mean of the two middle values for even counts.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub n: usize,
    pub threshold: f64,
    pub median: f64,
    pub mad: f64,
    pub sigma: f64,
    pub mean: f64,
}

fn one_class_stat(mut scores: Vec<f64>, q: f64, method: QuantileMethod, eps_sigma: f64) -> ClassStat {
    scores.sort_by(f64::total_cmp);
    let med = median(&scores);
    let mut dev: Vec<f64> = scores.iter().map(|s| (s - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev);
    ClassStat {
        n: scores.len(),
        threshold: match method {
            QuantileMethod::NearestRank => nearest_rank_quantile(&scores, q),
            QuantileMethod::Linear => linear_quantile(&scores, q),
        },
        median: med,
        mad,
        sigma: mad.max(eps_sigma),
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
    }
}

fn scores_by_class(s: &[f64], labels: &[usize], classes: usize) -> Vec<Vec<f64>> {
    let mut by = vec![Vec::new(); classes];
    for (&v, &y) in s.iter().zip(labels) {
        by[y].push(v);
    }
    by
}

/// Per-class threshold, median, MAD and scale. Every class must be non-empty.
pub fn class_stats(
    s: &[f64],
    labels: &[usize],
    classes: usize,
    q: f64,
    method: QuantileMethod,
    eps_sigma: f64,
) -> Result<Vec<ClassStat>> {
    scores_by_class(s, labels, classes)
        .into_iter()
        .enumerate()
        .map(|(j, scores)| {
            if scores.is_empty() {
                Err(Error::input(format!("class {j} has no pseudo-labeled rows")))
            } else {
                Ok(one_class_stat(scores, q, method, eps_sigma))
            }
        })
        .collect()
}

/// Like [`class_stats`], but empty classes yield `None`.
pub fn class_stats_lenient(
    s: &[f64],
    labels: &[usize],
    classes: usize,
    q: f64,
    method: QuantileMethod,
    eps_sigma: f64,
) -> Vec<Option<ClassStat>> {
    scores_by_class(s, labels, classes)
        .into_iter()
        .map(|scores| (!scores.is_empty()).then(|| one_class_stat(scores, q, method, eps_sigma)))
        .collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `w_min + (1 − w_min)·sigm((s − t)/(γσ))`, clamped to `[w_min, 1]`.
pub fn logistic_weight(s: f64, threshold: f64, sigma: f64, w_min: f64, gamma: f64) -> (f64, f64) {
    let z = (s - threshold) / (gamma * sigma);
    let w = (w_min + (1.0 - w_min) * sigmoid(z)).clamp(w_min, 1.0);
    (z, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn logistic_weights(
    s: &[f64],
    labels: &[usize],
    stats: &[Option<ClassStat>],
    w_min: f64,
    gamma: f64,
) -> SampleWeights {
    let (z, w) = s
        .iter()
        .zip(labels)
        .map(|(&si, &y)| {
            let st = stats[y].as_ref().expect("a labeled row implies a non-empty class");
            logistic_weight(si, st.threshold, st.sigma, w_min, gamma)
        })
        .unzip();
    SampleWeights { z, w }
}

/// Soft confident joint (rows: inferred class, columns: observed label) and
/// the clean fraction of every observed class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentJoint {
    pub q_hat: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

pub fn confident_joint(probs: &Matrix, labels: &[usize]) -> ConfidentJoint {
    let k = probs.cols();
    let mut q = vec![vec![0.0; k]; k];
    for (i, &j) in labels.iter().enumerate() {
        for (row, p) in q.iter_mut().zip(probs.row(i)) {
            row[j] += p;
        }
    }
    let rho = (0..k)
        .map(|j| {
            let col: f64 = (0..k).map(|r| q[r][j]).sum();
            if col > 0.0 {
                (q[j][j] / col).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    ConfidentJoint { q_hat: q, rho }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub target: Vec<f64>,
    pub mass: Vec<f64>,
    pub scale: Vec<f64>,
    /// Mass after rescaling and clipping.
    pub retained: Vec<f64>,
    /// Whether any weight of the class hit a clip bound.
    pub clipped: Vec<bool>,
    pub weights: Vec<f64>,
}

/// `T_j = ρ_j·n_j`, `a_j = T_j / max(ε, M_j)`, `w′ = clip(a_j·w, w_min, 1)`.
pub fn balanced_retention(w: &[f64], labels: &[usize], rho: &[f64], w_min: f64, eps_mass: f64) -> Retention {
    let k = rho.len();
    let mut n = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for (&wi, &y) in w.iter().zip(labels) {
        n[y] += 1;
        mass[y] += wi;
    }
    let target: Vec<f64> = (0..k).map(|j| rho[j] * n[j] as f64).collect();
    let scale: Vec<f64> = (0..k).map(|j| target[j] / mass[j].max(eps_mass)).collect();
    let mut retained = vec![0.0; k];
    let mut clipped = vec![false; k];
    let weights = w
        .iter()
        .zip(labels)
        .map(|(&wi, &y)| {
            let raw = scale[y] * wi;
            let out = raw.clamp(w_min, 1.0);
            if out != raw {
                clipped[y] = true;
            }
            retained[y] += out;
            out
        })
        .collect();
    Retention {
        target,
        mass,
        scale,
        retained,
        clipped,
        weights,
    }
}

pub const HISTOGRAM_BINS: usize = 50;

/// Counts over `[0, 1]` in equal bins; 1.0 falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub n: usize,
    pub stats: Option<ClassStat>,
    pub rho: f64,
    pub target: f64,
    pub mass: f64,
    pub scale: f64,
    pub retained: f64,
    pub clipped: bool,
    /// `retained − target`.
    pub gap: f64,
    pub histogram: Vec<usize>,
}

/// Everything computed by [`run_cl`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClReport {
    pub classes: usize,
    pub fold_count: usize,
    pub q: f64,
    pub w_min: f64,
    pub gamma: f64,
    pub histogram_bins: usize,
    pub per_class: Vec<ClassReport>,
    pub confident_joint: Vec<Vec<f64>>,
    pub folds: Vec<usize>,
    pub oos_probs: Vec<Vec<f64>>,
    pub self_confidence: Vec<f64>,
    pub z: Vec<f64>,
    pub raw_weights: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ClReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// All confident-learning stages on encoded features and pseudo-labels.
pub fn run_cl(x: &Matrix, labels: &[usize], classes: usize, cfg: &ClConfig, seed: u64) -> Result<ClReport> {
    let oos = oos_probs(x, labels, classes, cfg, seed)?;
    let stats = class_stats_lenient(&oos.self_confidence, labels, classes, cfg.q, cfg.quantile, cfg.eps_sigma);
    for (j, s) in stats.iter().enumerate() {
        if s.is_none() {
            log::warn!("class {j} received no pseudo-labels");
        }
    }
    let raw = logistic_weights(&oos.self_confidence, labels, &stats, cfg.w_min, cfg.gamma);
    let joint = confident_joint(&oos.probs, labels);
    let ret = balanced_retention(&raw.w, labels, &joint.rho, cfg.w_min, cfg.eps_mass);
    let by_class = scores_by_class(&oos.self_confidence, labels, classes);
    let per_class = (0..classes)
        .map(|j| ClassReport {
            class: j,
            n: by_class[j].len(),
            stats: stats[j].clone(),
            rho: joint.rho[j],
            target: ret.target[j],
            mass: ret.mass[j],
            scale: ret.scale[j],
            retained: ret.retained[j],
            clipped: ret.clipped[j],
            gap: ret.retained[j] - ret.target[j],
            histogram: histogram(&by_class[j], HISTOGRAM_BINS),
        })
        .collect();
    Ok(ClReport {
        classes,
        fold_count: oos.fold_count,
        q: cfg.q,
        w_min: cfg.w_min,
        gamma: cfg.gamma,
        histogram_bins: HISTOGRAM_BINS,
        per_class,
        confident_joint: joint.q_hat,
        folds: oos.folds,
        oos_probs: oos.probs.iter_rows().map(|r| r.to_vec()).collect(),
        self_confidence: oos.self_confidence,
        z: raw.z,
        raw_weights: raw.w,
        weights: ret.weights,
    })
}
