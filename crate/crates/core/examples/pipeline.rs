//! Every stage on a small synthetic fixture, artifacts in a temp directory.

use flowssl::pipeline::{run_pipeline, PipelineConfig};

fn main() -> flowssl::Result<()> {
    let overrides: Vec<(String, String)> = [
        ("synth.samples", "1500"),
        ("ae.epochs", "10"),
        ("tabcl.epochs", "10"),
        ("final.epochs", "20"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let mut cfg = PipelineConfig::default().with_overrides(&overrides)?;
    cfg.paths.output_dir = std::env::temp_dir().join("flowssl_pipeline_example");
    if let Some(r) = run_pipeline(&cfg)? {
        println!("accuracy {:.4}  macro F1 {:.4}", r.accuracy, r.macro_avg.f1);
    }
    let mut files: Vec<_> = std::fs::read_dir(&cfg.paths.output_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    println!("artifacts in {}:", cfg.paths.output_dir.display());
    for f in files {
        println!("  {}", f.to_string_lossy());
    }
    Ok(())
}
