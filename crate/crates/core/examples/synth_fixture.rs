//! Generate the synthetic ten-class flow mixture, split it and flip labels.

use flowssl::synth::{generate, inject_noise, split, SynthConfig};

fn main() -> flowssl::Result<()> {
    let cfg = SynthConfig { samples: 2000, ..SynthConfig::default() };
    let ds = generate(&cfg.spec(1)?)?;
    let labels = ds.labels.clone().expect("synthetic rows are labeled");
    let k = cfg.priors.len();
    println!("{} rows, {} features, {k} classes", ds.len(), ds.schema.names().len());
    for (c, name) in cfg.class_names.iter().enumerate() {
        let n = labels.iter().filter(|&&y| y == c).count();
        println!("  {name:<16} {n:>5}  (prior {:.3})", cfg.priors[c]);
    }
    let parts = split(&labels, k, cfg.seed_fraction, cfg.test_fraction, 1);
    println!("seed {}, unlabeled {}, test {}", parts.seed.len(), parts.unlabeled.len(), parts.test.len());
    let (_, flipped) = inject_noise(&labels, k, cfg.noise_rate, 1)?;
    println!("{} labels flipped at rate {}", flipped.iter().filter(|&&f| f).count(), cfg.noise_rate);
    Ok(())
}
