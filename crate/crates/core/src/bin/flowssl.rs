use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flowssl::error::{Error, Result};
use flowssl::pipeline::{self, artifacts, Branch, EvalOutputs, PipelineConfig, PseudoLabelOutputs, CONFIG_ENV};

/// Traffic classification with self-supervised pseudo-labels and confident learning.
///
/// Any config key can be overridden with a dotted flag, e.g. `--cl.q 0.75`.
#[derive(Parser)]
#[command(name = "flowssl", version)]
struct Cli {
    /// JSON config file (defaults to $FLOWSSL_CONFIG, then built-in defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Ae,
    Tabcl,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Cl,
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Captures to a flow dataset CSV and a transform file.
    Extract {
        captures: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        transform: Option<PathBuf>,
    },
    /// Write the synthetic fixture (splits, noisy copy, transform) into a directory.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Pretrain the autoencoder branch.
    PretrainAe {
        #[arg(long)]
        unlabeled: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Pretrain the contrastive branch.
    PretrainTabcl {
        #[arg(long)]
        seed_set: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Fine-tune a pretrained branch and pseudo-label the unlabeled flows.
    PseudoLabel {
        #[arg(long, value_enum)]
        branch: BranchArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed_set: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Consolidate the two branches' pseudo-labels.
    Fuse {
        #[arg(long)]
        ae: Option<PathBuf>,
        #[arg(long)]
        tabcl: Option<PathBuf>,
        #[arg(long)]
        unlabeled: PathBuf,
        /// Per-row fusion decisions.
        #[arg(short, long)]
        output: PathBuf,
        /// The unlabeled flows with a `pseudo_label` column.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        quality: Option<PathBuf>,
    },
    /// Confident-learning weights for a pseudo-labeled dataset.
    ClWeights {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        /// Report (JSON).
        #[arg(short, long)]
        output: PathBuf,
        /// Dataset with the `weight` column.
        #[arg(long)]
        weighted: PathBuf,
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// Train the final classifier.
    TrainFinal {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        transform: PathBuf,
        #[arg(long, value_enum, default_value = "cl")]
        weights: WeightsArg,
        #[arg(long)]
        seed_set: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
        /// Also predict this dataset ...
        #[arg(long, requires = "predictions")]
        test: Option<PathBuf>,
        /// ... into this file.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Compare a predictions CSV with a labeled dataset CSV.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        /// Directory for the metrics files.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run every stage.
    Pipeline {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Split `--section.key value` and `--section.key=value` out of the arguments.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.strip_prefix("--") {
            Some(key) if key.contains('.') && !key.starts_with('.') => {
                if let Some((k, v)) = key.split_once('=') {
                    overrides.push((k.to_string(), v.to_string()));
                } else {
                    let v = it
                        .next()
                        .ok_or_else(|| Error::config(format!("--{key} needs a value")))?;
                    overrides.push((key.to_string(), v));
                }
            }
            _ => rest.push(a),
        }
    }
    Ok((rest, overrides))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn classes_for(cfg: &PipelineConfig, arg: Option<usize>, observed: usize) -> usize {
    arg.or(cfg.classes).unwrap_or_else(|| {
        if cfg.paths.source == pipeline::DataSource::Synth {
            cfg.synth.priors.len()
        } else {
            log::warn!("class count inferred from the data ({observed}); pass --classes to fix it");
            observed
        }
    })
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let config_path = cli.config.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = PipelineConfig::load(config_path.as_deref(), overrides)?;
    let schema = cfg.features.schema()?;
    match cli.command {
        Command::Extract { captures, output, transform } => {
            let (ds, stats) = pipeline::extract_stage(&cfg, &captures, &output, transform.as_deref())?;
            println!("{} flows from {} packets ({} frames skipped)", ds.len(), stats.accepted, stats.skipped());
        }
        Command::Synth { output } => {
            let ds = pipeline::synth_stage(&cfg, &output)?;
            println!("{} synthetic flows written to {}", ds.len(), output.display());
        }
        Command::PretrainAe { unlabeled, transform, output, history } => {
            let h = history.unwrap_or_else(|| with_suffix(&output, "_history.csv"));
            pipeline::pretrain_ae_stage(&cfg, &unlabeled, &transform, &output, &h)?;
        }
        Command::PretrainTabcl { seed_set, unlabeled, transform, output, history } => {
            let h = history.unwrap_or_else(|| with_suffix(&output, "_history.csv"));
            pipeline::pretrain_tabcl_stage(&cfg, &seed_set, &unlabeled, &transform, &output, &h)?;
        }
        Command::PseudoLabel { branch, checkpoint, seed_set, unlabeled, transform, output, classifier, history } => {
            let branch = match branch {
                BranchArg::Ae => Branch::Ae,
                BranchArg::Tabcl => Branch::Tabcl,
            };
            let c = classifier.unwrap_or_else(|| with_suffix(&output, "_classifier.ckpt"));
            let h = history.unwrap_or_else(|| with_suffix(&output, "_finetune.csv"));
            let pred = pipeline::pseudo_label_stage(
                &cfg,
                branch,
                &checkpoint,
                &seed_set,
                &unlabeled,
                &transform,
                PseudoLabelOutputs {
                    pseudo: &output,
                    classifier: &c,
                    history: &h,
                },
            )?;
            println!("{} rows pseudo-labeled", pred.len());
        }
        Command::Fuse { ae, tabcl, unlabeled, output, dataset, quality } => {
            if ae.is_some() != tabcl.is_some() && cfg.fusion.branches == pipeline::Branches::Both {
                return Err(Error::config(
                    "fuse needs --ae and --tabcl; run pseudo-label for both branches \
                     (single-branch users skip fuse and pass that branch's labels on)",
                ));
            }
            let labels = pipeline::fuse_stage(&cfg, ae.as_deref(), tabcl.as_deref(), &unlabeled, &output, &dataset, quality.as_deref())?;
            println!("{} rows fused", labels.len());
        }
        Command::ClWeights { data, transform, classes, output, weighted, histograms } => {
            let observed = pipeline::load_raw(&data, &schema)?.observed_classes();
            let k = classes_for(&cfg, classes, observed);
            let report = pipeline::cl_stage(&cfg, &data, &transform, k, &output, &weighted, histograms.as_deref())?;
            let mean = report.weights.iter().sum::<f64>() / report.weights.len().max(1) as f64;
            println!("{} weights, mean {mean:.4}, {} folds", report.weights.len(), report.fold_count);
        }
        Command::TrainFinal { data, transform, weights, seed_set, classes, output, history, test, predictions } => {
            cfg.final_.use_weights = matches!(weights, WeightsArg::Cl);
            let observed = pipeline::load_raw(&data, &schema)?.observed_classes();
            let k = classes_for(&cfg, classes, observed);
            let h = history.unwrap_or_else(|| with_suffix(&output, "_history.csv"));
            pipeline::train_final_stage(&cfg, &data, &transform, seed_set.as_deref(), k, &output, &h)?;
            if let (Some(t), Some(p)) = (test, predictions) {
                pipeline::predict_stage(&cfg, &output, &t, &transform, &p)?;
            }
        }
        Command::Evaluate { predictions, truth, classes, output } => {
            let truth_ds = pipeline::load_raw(&truth, &schema)?;
            let observed = flowssl::final_trainer::read_predictions(&predictions)?
                .iter()
                .max()
                .map_or(0, |m| m + 1)
                .max(truth_ds.observed_classes());
            let k = classes_for(&cfg, classes, observed);
            let r = pipeline::evaluate_stage(&cfg, &predictions, &truth, k, &EvalOutputs::in_dir(&output, cfg.eval.write_dat))?;
            println!("accuracy {:.4}  macro F1 {:.4}  weighted F1 {:.4}", r.accuracy, r.macro_avg.f1, r.weighted_avg.f1);
        }
        Command::Pipeline { output } => {
            if let Some(o) = output {
                cfg.paths.output_dir = o;
            }
            match pipeline::run_pipeline(&cfg)? {
                Some(r) => println!(
                    "accuracy {:.4}  macro F1 {:.4}  (artifacts in {}, metrics in {})",
                    r.accuracy,
                    r.macro_avg.f1,
                    cfg.paths.output_dir.display(),
                    artifacts::METRICS_JSON
                ),
                None => println!("done; artifacts in {}", cfg.paths.output_dir.display()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = Cli::parse_from(args);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
