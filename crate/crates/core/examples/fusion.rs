//! Consolidate two branches' predictions row by row.

use flowssl::fusion::{fuse, summarize};
use flowssl::nn::Matrix;

fn main() -> flowssl::Result<()> {
    let a = Matrix::from_rows(&[[0.7, 0.2, 0.1], [0.4, 0.35, 0.25], [0.1, 0.1, 0.8], [0.5, 0.5, 0.0]])?;
    let b = Matrix::from_rows(&[[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.45, 0.1, 0.45], [0.0, 0.5, 0.5]])?;
    let (pa, pb) = (summarize(&a)?, summarize(&b)?);
    let fused = fuse(&pa, &pb)?;
    println!("row  a (conf, margin)      b (conf, margin)      fused  rule");
    for i in 0..pa.len() {
        println!(
            "{i:>3}  {} ({:.2}, {:.2})  {:>12} ({:.2}, {:.2})  {:>5}  {}",
            pa.labels[i],
            pa.confidence[i],
            pa.margin[i],
            pb.labels[i],
            pb.confidence[i],
            pb.margin[i],
            fused.labels[i],
            fused.provenance[i].as_str()
        );
    }
    Ok(())
}
