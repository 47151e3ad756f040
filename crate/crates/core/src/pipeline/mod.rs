//! Stage functions shared by the command-line tool and [`run_pipeline`].
//!
//! Every stage reads its inputs from files and writes its outputs to files,
//! so running the stages one by one gives the same artifacts as a full run.
//! Datasets on disk are always in raw feature units; stages standardize them
//! with the transform written next to the data.

pub mod config;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{Branches, DataSource, PipelineConfig, CONFIG_ENV};

use crate::cl::{run_cl, ClReport};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_histogram_dat, MetricsReport};
use crate::final_trainer::{predict, train_final_dataset, write_history as write_final_history, write_predictions};
use crate::flow::{self, Dataset, ParseStats, Schema, Standardizer};
use crate::fusion::{fuse, read_branch_csv, summarize, write_branch_csv, write_fused_csv, BranchPrediction};
use crate::nn::{Matrix, MlpModel};
use crate::ssl::head::write_finetune_history;
use crate::ssl::{ae, tabcl, AeModel, TabclModel};
use crate::synth::{generate, inject_noise, split};

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const CONFIG: &str = "00_config.json";
    pub const DATASET: &str = "01_dataset.csv";
    pub const SPEC: &str = "01_synth_spec.json";
    pub const SEED_SET: &str = "01_seed.csv";
    pub const UNLABELED: &str = "01_unlabeled.csv";
    pub const TEST: &str = "01_test.csv";
    pub const NOISY: &str = "01_noisy.csv";
    pub const TRANSFORM: &str = "01_transform.json";
    pub const AE: &str = "02_ae.ckpt";
    pub const AE_HISTORY: &str = "02_ae_history.csv";
    pub const TABCL: &str = "03_tabcl.ckpt";
    pub const TABCL_HISTORY: &str = "03_tabcl_history.csv";
    pub const AE_CLASSIFIER: &str = "04_ae_classifier.ckpt";
    pub const AE_FINETUNE: &str = "04_ae_finetune.csv";
    pub const AE_PSEUDO: &str = "04_ae_pseudo.csv";
    pub const TABCL_CLASSIFIER: &str = "04_tabcl_classifier.ckpt";
    pub const TABCL_FINETUNE: &str = "04_tabcl_finetune.csv";
    pub const TABCL_PSEUDO: &str = "04_tabcl_pseudo.csv";
    pub const FUSED: &str = "05_fused.csv";
    pub const PSEUDO_LABELED: &str = "05_pseudo_labeled.csv";
    pub const BRANCH_QUALITY: &str = "05_branch_quality.json";
    pub const CL_REPORT: &str = "06_cl_report.json";
    pub const WEIGHTED: &str = "06_weighted.csv";
    pub const CL_HISTOGRAMS: &str = "06_cl_histograms.dat";
    pub const FINAL: &str = "07_final.ckpt";
    pub const FINAL_HISTORY: &str = "07_final_history.csv";
    pub const PREDICTIONS: &str = "07_predictions.csv";
    pub const METRICS_JSON: &str = "07_metrics.json";
    pub const METRICS_CSV: &str = "07_metrics.csv";
    pub const CONFUSION: &str = "07_confusion.csv";
    pub const METRICS_DAT: &str = "07_metrics.dat";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Ae,
    Tabcl,
}

pub fn load_raw(path: &Path, schema: &Schema) -> Result<Dataset> {
    Dataset::load_csv(path, schema)
}

pub fn load_standardized(path: &Path, schema: &Schema, transform: &Path) -> Result<Dataset> {
    let t = Standardizer::load(transform)?;
    load_raw(path, schema)?.apply_standardizer(&t).map_err(|e| e.in_file(transform))
}

fn without_labels(mut ds: Dataset) -> Dataset {
    ds.labels = None;
    ds.pseudo_labels = None;
    ds.weights = None;
    ds
}

fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    ds.save_csv(path)
}

/// Fit the standardizer on the seed and unlabeled rows together.
pub fn fit_transform(seed: &Dataset, unlabeled: &Dataset) -> Result<Standardizer> {
    let features = seed.features.vstack(&unlabeled.features)?;
    Ok(Standardizer::fit(&Dataset::new(seed.schema.clone(), features)?))
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let mut text = model.to_json()?;
    text.push('\n');
    crate::io::write_text(path, &text)
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_json(&crate::io::read_text(path)?).map_err(|e| e.in_file(path))
}

/// Number of classes: the configured value, else one past the largest seed label.
pub fn resolve_classes(cfg: &PipelineConfig, seed: &Dataset) -> Result<usize> {
    let observed = seed.observed_classes();
    let k = match (cfg.classes, cfg.paths.source) {
        (Some(k), _) => k,
        (None, DataSource::Synth) => cfg.synth.priors.len(),
        (None, DataSource::Files) => observed,
    };
    if k < 2 {
        return Err(Error::config(format!("need at least two classes, found {k}")));
    }
    if observed > k {
        return Err(Error::config(format!("seed set has label {} but only {k} classes are configured", observed - 1)));
    }
    Ok(k)
}

pub fn class_names(cfg: &PipelineConfig, classes: usize) -> Vec<String> {
    if cfg.eval.class_names.len() == classes {
        cfg.eval.class_names.clone()
    } else if cfg.paths.source == DataSource::Synth && cfg.synth.class_names.len() == classes {
        cfg.synth.class_names.clone()
    } else {
        (0..classes).map(|k| k.to_string()).collect()
    }
}

/// Generate the synthetic fixture: the full set, seed/unlabeled/test splits,
/// a noisy-label copy of the unlabeled rows and the transform.
pub fn synth_stage(cfg: &PipelineConfig, dir: &Path) -> Result<Dataset> {
    let spec = cfg.synth.spec(cfg.seed)?;
    let ds = generate(&spec)?;
    let labels = ds.labels.clone().expect("generated data is labeled");
    let k = spec.classes();
    let sp = split(&labels, k, cfg.synth.seed_fraction, cfg.synth.test_fraction, cfg.seed);
    let (seed, unlabeled, test) = (ds.subset(&sp.seed), ds.subset(&sp.unlabeled), ds.subset(&sp.test));
    let truth = unlabeled.labels.clone().expect("labeled subset");
    let (noisy, _) = inject_noise(&truth, k, cfg.synth.noise_rate, cfg.seed)?;
    crate::io::write_json(&dir.join(artifacts::SPEC), &spec)?;
    save_dataset(&ds, &dir.join(artifacts::DATASET))?;
    save_dataset(&seed, &dir.join(artifacts::SEED_SET))?;
    save_dataset(&unlabeled, &dir.join(artifacts::UNLABELED))?;
    save_dataset(&test, &dir.join(artifacts::TEST))?;
    save_dataset(&unlabeled.clone().with_pseudo_labels(noisy)?, &dir.join(artifacts::NOISY))?;
    fit_transform(&seed, &unlabeled)?.save(&dir.join(artifacts::TRANSFORM))?;
    Ok(ds)
}

/// Captures to a raw flow dataset plus a transform fitted on it.
pub fn extract_stage(cfg: &PipelineConfig, captures: &[PathBuf], out: &Path, transform: Option<&Path>) -> Result<(Dataset, ParseStats)> {
    let (ds, stats) = flow::extract(captures, &cfg.features)?;
    if ds.is_empty() {
        log::warn!("no flows were extracted from {} capture(s)", captures.len());
    }
    if stats.skipped() > 0 {
        log::info!("skipped {} frames ({:?})", stats.skipped(), stats);
    }
    save_dataset(&ds, out)?;
    if let Some(t) = transform {
        Standardizer::fit(&ds).save(t)?;
    }
    Ok((ds, stats))
}

pub fn pretrain_ae_stage(cfg: &PipelineConfig, unlabeled: &Path, transform: &Path, out: &Path, history: &Path) -> Result<AeModel> {
    let schema = cfg.features.schema()?;
    let ds_l = without_labels(load_standardized(unlabeled, &schema, transform)?);
    let cons = cfg.constraints.build(&schema)?;
    let (model, hist) = ae::pretrain(&ds_l, &cons, &cfg.ae, cfg.seed)?;
    model.save(out)?;
    ae::write_history(history, &hist)?;
    Ok(model)
}

pub fn pretrain_tabcl_stage(
    cfg: &PipelineConfig,
    seed_set: &Path,
    unlabeled: &Path,
    transform: &Path,
    out: &Path,
    history: &Path,
) -> Result<TabclModel> {
    let schema = cfg.features.schema()?;
    let ds_s = load_standardized(seed_set, &schema, transform)?;
    let ds_l = without_labels(load_standardized(unlabeled, &schema, transform)?);
    let k = resolve_classes(cfg, &ds_s)?;
    let cons = cfg.constraints.build(&schema)?;
    let (model, hist, _) = tabcl::pretrain(&ds_l, &ds_s, k, &cons, &cfg.tabcl, cfg.seed)?;
    model.save(out)?;
    tabcl::write_history(history, &hist)?;
    Ok(model)
}

/// Output files of the pseudo-labeling stage.
pub struct PseudoLabelOutputs<'a> {
    pub pseudo: &'a Path,
    pub classifier: &'a Path,
    pub history: &'a Path,
}

/// Fine-tune a pretrained branch on the seed set and label the unlabeled rows.
pub fn pseudo_label_stage(
    cfg: &PipelineConfig,
    branch: Branch,
    checkpoint: &Path,
    seed_set: &Path,
    unlabeled: &Path,
    transform: &Path,
    out: PseudoLabelOutputs<'_>,
) -> Result<BranchPrediction> {
    let schema = cfg.features.schema()?;
    let ds_s = load_standardized(seed_set, &schema, transform)?;
    let ds_l = without_labels(load_standardized(unlabeled, &schema, transform)?);
    let k = resolve_classes(cfg, &ds_s)?;
    let (clf, hist, probs) = match branch {
        Branch::Ae => {
            let model = AeModel::load(checkpoint)?;
            let (clf, hist) = ae::finetune(&model, &ds_s, k, &cfg.ae.finetune, cfg.seed)?;
            let (_, probs) = clf.pseudo_label(&ds_l.encode())?;
            (clf, hist, probs)
        }
        Branch::Tabcl => {
            let model = TabclModel::load(checkpoint)?;
            let (clf, hist, _, probs) =
                tabcl::finetune_and_label(&model.encoder, &ds_s, &ds_l, k, &cfg.tabcl.finetune, cfg.seed)?;
            (clf, hist, probs)
        }
    };
    let pred = summarize(&probs)?;
    write_branch_csv(out.pseudo, &pred)?;
    clf.save(out.classifier)?;
    write_finetune_history(out.history, &hist)?;
    Ok(pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchQuality {
    pub rows: usize,
    pub ae_accuracy: Option<f64>,
    pub tabcl_accuracy: Option<f64>,
    pub fused_accuracy: f64,
    pub agreement_rate: Option<f64>,
}

fn accuracy(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len().max(1) as f64
}

/// Consolidate branch pseudo-labels and attach them to the unlabeled rows.
/// When the unlabeled file carries ground truth, a quality report is written
/// to `quality`.
pub fn fuse_stage(
    cfg: &PipelineConfig,
    ae_pseudo: Option<&Path>,
    tabcl_pseudo: Option<&Path>,
    unlabeled: &Path,
    fused_out: &Path,
    dataset_out: &Path,
    quality: Option<&Path>,
) -> Result<Vec<usize>> {
    let schema = cfg.features.schema()?;
    let ds = load_raw(unlabeled, &schema)?;
    let (a, b) = match (cfg.fusion.branches, ae_pseudo, tabcl_pseudo) {
        (Branches::Both, Some(a), Some(b)) => (Some(read_branch_csv(a)?), Some(read_branch_csv(b)?)),
        (Branches::Both, _, _) => {
            return Err(Error::config(
                "fusion needs pseudo-labels from both branches; run pseudo-label for the missing branch, \
                 or set fusion.branches to \"ae\" or \"tabcl\" to use a single branch",
            ))
        }
        (Branches::Ae, Some(a), _) => (Some(read_branch_csv(a)?), None),
        (Branches::Tabcl, _, Some(b)) => (None, Some(read_branch_csv(b)?)),
        (branch, _, _) => {
            return Err(Error::config(format!("fusion.branches is {branch:?} but that branch's pseudo-labels are missing")))
        }
    };
    let labels = match (&a, &b) {
        (Some(a), Some(b)) => {
            let fused = fuse(a, b)?;
            write_fused_csv(fused_out, a, b, &fused)?;
            fused.labels
        }
        (Some(p), None) | (None, Some(p)) => p.labels.clone(),
        (None, None) => unreachable!("at least one branch is loaded"),
    };
    if labels.len() != ds.len() {
        return Err(Error::config(format!(
            "{} pseudo-labels for {} unlabeled rows",
            labels.len(),
            ds.len()
        )));
    }
    if let (Some(q), Some(truth)) = (quality, &ds.labels) {
        let report = BranchQuality {
            rows: labels.len(),
            ae_accuracy: a.as_ref().map(|p| accuracy(&p.labels, truth)),
            tabcl_accuracy: b.as_ref().map(|p| accuracy(&p.labels, truth)),
            fused_accuracy: accuracy(&labels, truth),
            agreement_rate: a.as_ref().zip(b.as_ref()).map(|(a, b)| accuracy(&a.labels, &b.labels)),
        };
        crate::io::write_json(q, &report)?;
    }
    save_dataset(&ds.with_pseudo_labels(labels.clone())?, dataset_out)?;
    Ok(labels)
}

/// Confident-learning weights for a pseudo-labeled dataset.
pub fn cl_stage(
    cfg: &PipelineConfig,
    pseudo_labeled: &Path,
    transform: &Path,
    classes: usize,
    report_out: &Path,
    weighted_out: &Path,
    histograms_out: Option<&Path>,
) -> Result<ClReport> {
    let schema = cfg.features.schema()?;
    let raw = load_raw(pseudo_labeled, &schema)?;
    let t = Standardizer::load(transform)?;
    let labels = raw
        .pseudo_labels
        .clone()
        .ok_or_else(|| Error::input("no `pseudo_label` column").in_file(pseudo_labeled))?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!("pseudo-label {bad} but only {classes} classes are configured")));
    }
    let x = raw.apply_standardizer(&t)?.encode();
    let report = run_cl(&x, &labels, classes, &cfg.cl, cfg.seed)?;
    report.save(report_out)?;
    let mut weighted = raw;
    weighted.weights = None;
    save_dataset(&weighted.with_weights(report.weights.clone())?, weighted_out)?;
    if let Some(h) = histograms_out {
        let names = class_names(cfg, classes);
        let series: Vec<(String, Vec<usize>)> = report
            .per_class
            .iter()
            .map(|c| (names[c.class].clone(), c.histogram.clone()))
            .collect();
        write_histogram_dat(h, &series)?;
    }
    Ok(report)
}

/// Train the final classifier on a pseudo-labeled (optionally weighted) file.
pub fn train_final_stage(
    cfg: &PipelineConfig,
    data: &Path,
    transform: &Path,
    seed_set: Option<&Path>,
    classes: usize,
    model_out: &Path,
    history_out: &Path,
) -> Result<MlpModel> {
    let schema = cfg.features.schema()?;
    let mut ds = load_standardized(data, &schema, transform)?;
    if ds.pseudo_labels.is_none() {
        return Err(Error::input("no `pseudo_label` column").in_file(data));
    }
    ds.labels = None;
    if cfg.final_.include_seed_set {
        let path = seed_set.ok_or_else(|| Error::config("final.include_seed_set needs the seed set"))?;
        let s = load_standardized(path, &schema, transform)?;
        let seed_labels = s.labels.clone().ok_or_else(|| Error::input("seed set has no labels").in_file(path))?;
        let n_s = s.len();
        let mut pseudo = ds.pseudo_labels.take().expect("checked above");
        pseudo.extend(seed_labels);
        let weights = ds.weights.take().map(|mut w| {
            w.extend(std::iter::repeat(1.0).take(n_s));
            w
        });
        ds = Dataset {
            features: ds.features.vstack(&s.features)?,
            pseudo_labels: Some(pseudo),
            weights,
            ..ds
        };
    }
    let (model, hist) = train_final_dataset(&ds, classes, &cfg.final_, cfg.seed)?;
    save_model(&model, model_out)?;
    write_final_history(history_out, &hist)?;
    Ok(model)
}

pub fn predict_stage(cfg: &PipelineConfig, model: &Path, data: &Path, transform: &Path, out: &Path) -> Result<(Vec<usize>, Matrix)> {
    let schema = cfg.features.schema()?;
    let m = load_model(model)?;
    let ds = load_standardized(data, &schema, transform)?;
    let (labels, probs) = predict(&m, &ds.encode())?;
    write_predictions(out, &labels, &probs)?;
    Ok((labels, probs))
}

/// Output files of the evaluation stage.
pub struct EvalOutputs {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub confusion: PathBuf,
    pub dat: Option<PathBuf>,
}

impl EvalOutputs {
    pub fn in_dir(dir: &Path, write_dat: bool) -> Self {
        Self {
            json: dir.join(artifacts::METRICS_JSON),
            csv: dir.join(artifacts::METRICS_CSV),
            confusion: dir.join(artifacts::CONFUSION),
            dat: write_dat.then(|| dir.join(artifacts::METRICS_DAT)),
        }
    }
}

/// Compare a predictions file with the `label` column of a dataset file.
pub fn evaluate_stage(cfg: &PipelineConfig, predictions: &Path, truth: &Path, classes: usize, out: &EvalOutputs) -> Result<MetricsReport> {
    let schema = cfg.features.schema()?;
    let pred = crate::final_trainer::read_predictions(predictions)?;
    let truth_ds = load_raw(truth, &schema)?;
    let y = truth_ds
        .labels
        .ok_or_else(|| Error::input("no `label` column").in_file(truth))?;
    let names = class_names(cfg, classes);
    let report = evaluate(&y, &pred, &names)?;
    report.save_json(&out.json)?;
    report.save_csv(&out.csv)?;
    report.confusion.save_csv(&out.confusion, &names)?;
    if let Some(d) = &out.dat {
        report.save_dat(d)?;
    }
    Ok(report)
}

/// Input files resolved into the output directory.
fn prepare_inputs(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    match cfg.paths.source {
        DataSource::Synth => {
            synth_stage(cfg, dir)?;
        }
        DataSource::Files => {
            let schema = cfg.features.schema()?;
            let seed_path = cfg
                .paths
                .seed_set
                .as_ref()
                .ok_or_else(|| Error::config("paths.seed_set is required when paths.source is \"files\""))?;
            let seed = load_raw(seed_path, &schema)?;
            if seed.labels.is_none() {
                return Err(Error::config("the seed set needs a `label` column").in_file(seed_path));
            }
            let unlabeled = if !cfg.paths.captures.is_empty() {
                flow::extract(&cfg.paths.captures, &cfg.features)?.0
            } else {
                let p = cfg
                    .paths
                    .unlabeled
                    .as_ref()
                    .ok_or_else(|| Error::config("set paths.unlabeled or paths.captures"))?;
                load_raw(p, &schema)?
            };
            if unlabeled.is_empty() {
                return Err(Error::input("no unlabeled flows"));
            }
            save_dataset(&seed, &dir.join(artifacts::SEED_SET))?;
            save_dataset(&unlabeled, &dir.join(artifacts::UNLABELED))?;
            if let Some(t) = &cfg.paths.test {
                save_dataset(&load_raw(t, &schema)?, &dir.join(artifacts::TEST))?;
            }
            fit_transform(&seed, &unlabeled)?.save(&dir.join(artifacts::TRANSFORM))?;
        }
    }
    Ok(())
}

/// Check class counts of every labeled input before any training.
fn check_classes(cfg: &PipelineConfig, dir: &Path) -> Result<usize> {
    let schema = cfg.features.schema()?;
    let seed = load_raw(&dir.join(artifacts::SEED_SET), &schema)?;
    let k = resolve_classes(cfg, &seed)?;
    let test = dir.join(artifacts::TEST);
    if test.exists() {
        let t = load_raw(&test, &schema)?;
        if t.observed_classes() > k {
            return Err(Error::config(format!("test set has labels beyond the {k} configured classes")));
        }
    }
    Ok(k)
}

/// Run every stage, writing all artifacts under `paths.output_dir`. Returns
/// the metrics on the test set when one is available.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Option<MetricsReport>> {
    cfg.validate()?;
    let dir = cfg.paths.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let p = |name: &str| dir.join(name);
    cfg.save(&p(artifacts::CONFIG))?;
    prepare_inputs(cfg, &dir)?;
    let k = check_classes(cfg, &dir)?;
    let (seed, unl, tr) = (p(artifacts::SEED_SET), p(artifacts::UNLABELED), p(artifacts::TRANSFORM));
    let want_ae = cfg.fusion.branches != Branches::Tabcl;
    let want_tabcl = cfg.fusion.branches != Branches::Ae;
    if want_ae {
        log::info!("pretraining the autoencoder branch");
        pretrain_ae_stage(cfg, &unl, &tr, &p(artifacts::AE), &p(artifacts::AE_HISTORY))?;
        pseudo_label_stage(
            cfg,
            Branch::Ae,
            &p(artifacts::AE),
            &seed,
            &unl,
            &tr,
            PseudoLabelOutputs {
                pseudo: &p(artifacts::AE_PSEUDO),
                classifier: &p(artifacts::AE_CLASSIFIER),
                history: &p(artifacts::AE_FINETUNE),
            },
        )?;
    }
    if want_tabcl {
        log::info!("pretraining the contrastive branch");
        pretrain_tabcl_stage(cfg, &seed, &unl, &tr, &p(artifacts::TABCL), &p(artifacts::TABCL_HISTORY))?;
        pseudo_label_stage(
            cfg,
            Branch::Tabcl,
            &p(artifacts::TABCL),
            &seed,
            &unl,
            &tr,
            PseudoLabelOutputs {
                pseudo: &p(artifacts::TABCL_PSEUDO),
                classifier: &p(artifacts::TABCL_CLASSIFIER),
                history: &p(artifacts::TABCL_FINETUNE),
            },
        )?;
    }
    log::info!("fusing pseudo-labels");
    fuse_stage(
        cfg,
        want_ae.then(|| p(artifacts::AE_PSEUDO)).as_deref(),
        want_tabcl.then(|| p(artifacts::TABCL_PSEUDO)).as_deref(),
        &unl,
        &p(artifacts::FUSED),
        &p(artifacts::PSEUDO_LABELED),
        Some(&p(artifacts::BRANCH_QUALITY)),
    )?;
    log::info!("computing confident-learning weights");
    cl_stage(
        cfg,
        &p(artifacts::PSEUDO_LABELED),
        &tr,
        k,
        &p(artifacts::CL_REPORT),
        &p(artifacts::WEIGHTED),
        cfg.eval.write_dat.then(|| p(artifacts::CL_HISTOGRAMS)).as_deref(),
    )?;
    log::info!("training the final classifier");
    train_final_stage(cfg, &p(artifacts::WEIGHTED), &tr, Some(&seed), k, &p(artifacts::FINAL), &p(artifacts::FINAL_HISTORY))?;
    let test = p(artifacts::TEST);
    if !test.exists() {
        log::warn!("no test set; skipping evaluation");
        return Ok(None);
    }
    predict_stage(cfg, &p(artifacts::FINAL), &test, &tr, &p(artifacts::PREDICTIONS))?;
    let report = evaluate_stage(cfg, &p(artifacts::PREDICTIONS), &test, k, &EvalOutputs::in_dir(&dir, cfg.eval.write_dat))?;
    log::info!("test accuracy {:.4}, macro F1 {:.4}", report.accuracy, report.macro_avg.f1);
    Ok(Some(report))
}
