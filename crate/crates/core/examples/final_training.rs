//! Train the final classifier with symmetric cross-entropy and sample weights.

use flowssl::cl::{run_cl, ClConfig};
use flowssl::final_trainer::{predict, train_final, SceConfig};
use flowssl::synth::{generate, inject_noise, split, SynthConfig};

fn main() -> flowssl::Result<()> {
    let cfg = SynthConfig { samples: 3000, ..SynthConfig::default() };
    let ds = generate(&cfg.spec(5)?)?.standardize()?;
    let labels = ds.labels.clone().unwrap();
    let k = cfg.priors.len();
    let parts = split(&labels, k, 0.0, 0.2, 5);
    let train = ds.subset(&parts.unlabeled);
    let test = ds.subset(&parts.test);
    let (noisy, _) = inject_noise(train.labels.as_ref().unwrap(), k, 0.1, 5)?;
    let x = train.encode();

    let weights = run_cl(&x, &noisy, k, &ClConfig::default(), 5)?.weights;
    let sce = SceConfig { epochs: 20, ..SceConfig::default() };
    let (model, history) = train_final(&x, &noisy, Some(&weights), k, &sce, 5)?;
    for e in history.iter().step_by(5) {
        println!("epoch {:>3}  loss {:.4}  train accuracy {:.4}", e.epoch, e.loss, e.train_accuracy);
    }
    let (pred, _) = predict(&model, &test.encode())?;
    let truth = test.labels.as_ref().unwrap();
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    println!("test accuracy {:.4}", correct as f64 / truth.len() as f64);
    Ok(())
}
