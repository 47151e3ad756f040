//! Down-weight likely mislabeled rows with out-of-fold confidence.

use flowssl::cl::{run_cl, ClConfig};
use flowssl::synth::{generate, inject_noise, SynthConfig};

fn main() -> flowssl::Result<()> {
    let cfg = SynthConfig { samples: 3000, ..SynthConfig::default() };
    let ds = generate(&cfg.spec(4)?)?;
    let clean = ds.labels.clone().unwrap();
    let k = cfg.priors.len();
    let (noisy, flipped) = inject_noise(&clean, k, 0.1, 4)?;
    let x = ds.standardize()?.encode();

    let report = run_cl(&x, &noisy, k, &ClConfig::default(), 4)?;
    let mean = |want: bool| {
        let w: Vec<f64> = report.weights.iter().zip(&flipped).filter(|(_, &f)| f == want).map(|(w, _)| *w).collect();
        w.iter().sum::<f64>() / w.len() as f64
    };
    println!("{} folds; mean weight clean {:.3}, flipped {:.3}", report.fold_count, mean(false), mean(true));
    println!("class      n    rho  retained  target  clipped");
    for c in &report.per_class {
        println!("{:>5} {:>6} {:>6.3} {:>9.2} {:>7.2}  {}", c.class, c.n, c.rho, c.retained, c.target, c.clipped);
    }
    Ok(())
}
