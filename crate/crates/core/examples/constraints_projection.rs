//! Repair a feature vector whose derived features disagree with their inputs.

use flowssl::constraints::ConstraintSet;
use flowssl::flow::default_constraints;
use flowssl::flow::features::CONTINUOUS_FEATURES;

fn main() -> flowssl::Result<()> {
    let names: Vec<String> = CONTINUOUS_FEATURES.iter().map(|s| s.to_string()).collect();
    let cons = ConstraintSet::from_specs(&default_constraints(0.5), &names, 1e-6)?;
    let col = |n: &str| names.iter().position(|x| x == n).unwrap();

    let mut x = vec![1.0; names.len()];
    x[col("total_packets")] = 12.0;
    x[col("total_bytes")] = 9000.0;
    x[col("duration")] = 3.0;
    // stale derived values, as a decoder or a feature swap might produce
    x[col("mean_pkt_len")] = 500.0;
    x[col("throughput")] = 100.0;
    x[col("mean_iat")] = 1.0;

    println!("residuals before: {:?}", cons.residuals(&x));
    cons.project(&mut x);
    println!("residuals after:  {:?}", cons.residuals(&x));
    for n in ["mean_pkt_len", "throughput", "mean_iat"] {
        println!("  {n:<14} {:.6}", x[col(n)]);
    }
    Ok(())
}
