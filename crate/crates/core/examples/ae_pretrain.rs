//! Pretrain the constraint-aware autoencoder, fine-tune it on the labeled seed
//! set and pseudo-label the unlabeled flows.

use flowssl::flow::default_constraints;
use flowssl::flow::features::CONTINUOUS_FEATURES;
use flowssl::constraints::ConstraintSet;
use flowssl::ssl::ae::{finetune, pretrain, AeConfig};
use flowssl::synth::{generate, split, SynthConfig};

fn main() -> flowssl::Result<()> {
    let cfg = SynthConfig { samples: 2000, ..SynthConfig::default() };
    let ds = generate(&cfg.spec(2)?)?.standardize()?;
    let labels = ds.labels.clone().unwrap();
    let k = cfg.priors.len();
    let parts = split(&labels, k, cfg.seed_fraction, 0.0, 2);
    let seed_set = ds.subset(&parts.seed);
    let mut unlabeled = ds.subset(&parts.unlabeled);
    let truth = unlabeled.labels.take().unwrap();

    let names: Vec<String> = CONTINUOUS_FEATURES.iter().map(|s| s.to_string()).collect();
    let cons = ConstraintSet::from_specs(&default_constraints(0.5), &names, 1e-6)?;
    let ae_cfg = AeConfig { epochs: 15, ..AeConfig::default() };
    let (model, history) = pretrain(&unlabeled, &cons, &ae_cfg, 2)?;
    for e in history.iter().step_by(5) {
        println!("epoch {:>3}  mse {:.4}  ce {:.4}  constraint {:.4}", e.epoch, e.mse, e.ce_cat, e.cons);
    }
    let (clf, _) = finetune(&model, &seed_set, k, &ae_cfg.finetune, 2)?;
    let (pseudo, _) = clf.pseudo_label(&unlabeled.encode())?;
    let correct = pseudo.iter().zip(&truth).filter(|(p, t)| p == t).count();
    println!("pseudo-label accuracy {:.4} on {} flows", correct as f64 / truth.len() as f64, truth.len());
    Ok(())
}
