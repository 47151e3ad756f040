//! Contrastive pretraining with class-conditioned views, then pseudo-labeling.

use flowssl::constraints::ConstraintSet;
use flowssl::flow::default_constraints;
use flowssl::flow::features::CONTINUOUS_FEATURES;
use flowssl::ssl::tabcl::{finetune_and_label, pretrain, TabclConfig};
use flowssl::synth::{generate, split, SynthConfig};

fn main() -> flowssl::Result<()> {
    let cfg = SynthConfig { samples: 2000, ..SynthConfig::default() };
    let ds = generate(&cfg.spec(3)?)?.standardize()?;
    let labels = ds.labels.clone().unwrap();
    let k = cfg.priors.len();
    let parts = split(&labels, k, cfg.seed_fraction, 0.0, 3);
    let seed_set = ds.subset(&parts.seed);
    let mut unlabeled = ds.subset(&parts.unlabeled);
    let truth = unlabeled.labels.take().unwrap();

    let names: Vec<String> = CONTINUOUS_FEATURES.iter().map(|s| s.to_string()).collect();
    let cons = ConstraintSet::from_specs(&default_constraints(0.5), &names, 1e-6)?;
    let tc = TabclConfig { epochs: 10, refresh_interval: 3, ..TabclConfig::default() };
    let (model, history, _) = pretrain(&unlabeled, &seed_set, k, &cons, &tc, 3)?;
    for e in &history {
        let refresh = e.change_fraction.map_or(String::new(), |f| format!("  refresh: {:.1}% changed", 100.0 * f));
        println!("epoch {:>3}  cont {:.4}  cat {:.4}  total {:.4}{refresh}", e.epoch, e.l_cont, e.l_cat, e.l_tabcl);
    }
    let (_, _, pseudo, _) = finetune_and_label(&model.encoder, &seed_set, &unlabeled, k, &tc.finetune, 3)?;
    let correct = pseudo.iter().zip(&truth).filter(|(p, t)| p == t).count();
    println!("pseudo-label accuracy {:.4} on {} flows", correct as f64 / truth.len() as f64, truth.len());
    Ok(())
}
