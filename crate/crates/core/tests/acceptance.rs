//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::equivalence::{self, EQUIVALENCES};
use common::fixtures::{
    ablation_fixture, capture, capture_packets, complementary_branches, expected_flows, noisy_fixture,
};
use common::gradcheck::{self, CHECKS};
use common::rng;
use flowssl::cl::{balanced_retention, run_cl, ClConfig, ClReport};
use flowssl::constraints::{Constraint, ConstraintSet};
use flowssl::final_trainer::{predict, train_final, SceConfig};
use flowssl::flow::features::CONTINUOUS_FEATURES;
use flowssl::flow::{default_constraints, extract, FeatureConfig};
use flowssl::fusion::fuse;
use flowssl::synth::{generate, SynthConfig};
use rand::Rng;

const SEEDS: u64 = 10;
const ROWS: usize = 5000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    for (name, check) in CHECKS {
        for seed in 0..20 {
            let e = check(seed);
            if !(e <= worst.0) {
                worst = (e, name);
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst.0 <= gradcheck::TOLERANCE && t < Duration::from_secs(10),
        format!("worst relative error {:.2e} ({}), {:.1} s", worst.0, worst.1, secs(t)),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst = (0.0f64, "");
    for (name, f) in EQUIVALENCES {
        for seed in 0..equivalence::INSTANCES {
            let e = f(seed);
            if !(e <= worst.0) {
                worst = (e, name);
            }
        }
    }
    outcome(
        worst.0 <= equivalence::TOLERANCE,
        format!("{} routines x {} instances, worst {:.2e} ({})", EQUIVALENCES.len(), equivalence::INSTANCES, worst.0, worst.1),
    )
}

fn noise_separation(reports: &mut Vec<ClReport>) -> Outcome {
    let start = Instant::now();
    let cfg = ClConfig::default();
    let mut flipped = Vec::new();
    let mut clean = Vec::new();
    for seed in 0..SEEDS {
        let f = noisy_fixture(seed, ROWS);
        let r = run_cl(&f.x, &f.noisy, f.classes, &cfg, seed).unwrap();
        let pick = |want: bool| {
            let v: Vec<f64> = r.weights.iter().zip(&f.flipped).filter(|(_, &m)| m == want).map(|(w, _)| *w).collect();
            mean(&v)
        };
        flipped.push(pick(true));
        clean.push(pick(false));
        reports.push(r);
    }
    let t = start.elapsed();
    let (wf, wc) = (mean(&flipped), mean(&clean));
    outcome(
        wf <= wc - 0.20 && t < Duration::from_secs(120),
        format!("mean weight flipped {wf:.4}, clean {wc:.4}, gap {:.4} (need >= 0.20), {:.1} s", wc - wf, secs(t)),
    )
}

fn ablation_direction(reports: &mut Vec<ClReport>) -> Outcome {
    let start = Instant::now();
    let cl = ClConfig::default();
    let sce = SceConfig::default();
    let mut gains = Vec::new();
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..SEEDS {
        let f = ablation_fixture(seed, ROWS);
        let r = run_cl(&f.x_train, &f.y_train, f.classes, &cl, seed).unwrap();
        let acc = |w: Option<&[f64]>| {
            let (model, _) = train_final(&f.x_train, &f.y_train, w, f.classes, &sce, seed).unwrap();
            let (pred, _) = predict(&model, &f.x_test).unwrap();
            pred.iter().zip(&f.y_test).filter(|(p, t)| p == t).count() as f64 / f.y_test.len() as f64
        };
        let a = acc(Some(&r.weights));
        let b = acc(None);
        with.push(a);
        without.push(b);
        gains.push(a - b);
        reports.push(r);
    }
    let t = start.elapsed();
    let gain = 100.0 * mean(&gains);
    outcome(
        gain >= 2.0 && t < Duration::from_secs(600),
        format!(
            "accuracy with weights {:.4}, without {:.4}, gain {gain:+.2} pp (need >= +2), {:.1} s",
            mean(&with),
            mean(&without),
            secs(t)
        ),
    )
}

fn fusion_dominance() -> Outcome {
    let mut ok = true;
    let mut worst_margin = f64::INFINITY;
    let mut both_right_wrong = 0usize;
    for seed in 0..SEEDS {
        let (truth, a, b) = complementary_branches(seed, ROWS, 10);
        let fused = fuse(&a, &b).unwrap();
        let acc = |l: &[usize]| l.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64;
        let margin = 100.0 * (acc(&fused.labels) - acc(&a.labels).max(acc(&b.labels)));
        worst_margin = worst_margin.min(margin);
        ok &= margin >= -0.5;
        for i in 0..truth.len() {
            if a.labels[i] == truth[i] && b.labels[i] == truth[i] && fused.labels[i] != truth[i] {
                both_right_wrong += 1;
            }
        }
    }
    outcome(
        ok && both_right_wrong == 0,
        format!("worst fused minus best branch {worst_margin:+.2} pp, {both_right_wrong} rows lost where both were right"),
    )
}

fn constraint_machinery() -> Outcome {
    let names: Vec<String> = CONTINUOUS_FEATURES.iter().map(|s| s.to_string()).collect();
    let default = ConstraintSet::from_specs(&default_constraints(0.5), &names, 1e-6).unwrap();
    let chained = ConstraintSet::new(
        vec![Constraint::sum(0, 1, 2, 0.5), Constraint::ratio(3, 0, 4, 0.5), Constraint::product(5, 3, 1, 0.5)],
        6,
        1e-6,
    )
    .unwrap();
    let mut r = rng(6);
    let mut worst_idem = 0.0f64;
    let mut worst_res = 0.0f64;
    for cons in [&default, &chained] {
        for _ in 0..10_000 {
            // magnitudes from 1e-8 to 1e6, either sign, some exact zeros
            let mut v: Vec<f64> = (0..cons.width())
                .map(|_| match r.gen_range(0..10) {
                    0 => 0.0,
                    _ => r.gen_range(-1.0..1.0) * 10f64.powf(r.gen_range(-8.0..6.0)),
                })
                .collect();
            cons.project(&mut v);
            let once = v.clone();
            cons.project(&mut v);
            for (a, b) in once.iter().zip(&v) {
                worst_idem = worst_idem.max((a - b).abs());
            }
            for g in cons.residuals(&once) {
                worst_res = worst_res.max(g.abs());
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.pcap");
    capture(false, true).write(&path).unwrap();
    let (pcap_rows, _) = extract(&[path], &FeatureConfig::default()).unwrap();
    let synth_rows = generate(&SynthConfig::default().spec(0).unwrap()).unwrap();
    let mut worst_feat = 0.0f64;
    for ds in [&pcap_rows, &synth_rows] {
        let cont = ds.schema.continuous_indices();
        for row in ds.features.iter_rows() {
            let x: Vec<f64> = cont.iter().map(|&c| row[c]).collect();
            for g in default.residuals(&x) {
                worst_feat = worst_feat.max(g.abs());
            }
        }
    }
    outcome(
        worst_idem == 0.0 && worst_res <= 1e-9 && worst_feat <= 1e-9,
        format!(
            "20000 vectors: idempotence {worst_idem:.1e}, residual {worst_res:.1e}; featurized rows residual {worst_feat:.1e}"
        ),
    )
}

fn weight_range(reports: &[ClReport]) -> Outcome {
    let w_min = ClConfig::default().w_min;
    let mut out_of_range = 0usize;
    let mut unclipped = 0usize;
    let mut worst_gap = 0.0f64;
    let mut check = |weights: &[f64], raw: &[f64], classes: Vec<(bool, f64, f64)>| {
        out_of_range += weights.iter().chain(raw).filter(|&&w| !(w >= w_min && w <= 1.0)).count();
        for (clipped, retained, target) in classes {
            if !clipped {
                unclipped += 1;
                worst_gap = worst_gap.max((retained - target).abs());
            }
        }
    };
    for r in reports {
        check(&r.weights, &r.raw_weights, r.per_class.iter().map(|c| (c.clipped, c.retained, c.target)).collect());
    }
    let mut g = rng(7);
    for _ in 0..1000 {
        let k = g.gen_range(2..8);
        let n = g.gen_range(k..300);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { g.gen_range(0..k) }).collect();
        let w: Vec<f64> = (0..n).map(|_| g.gen_range(w_min..=1.0)).collect();
        let rho: Vec<f64> = (0..k).map(|_| g.gen_range(0.0..=1.0)).collect();
        let b = balanced_retention(&w, &labels, &rho, w_min, 1e-9);
        check(&b.weights, &w, (0..k).map(|j| (b.clipped[j], b.retained[j], b.target[j])).collect());
    }
    outcome(
        out_of_range == 0 && worst_gap <= 1e-9,
        format!(
            "{} CL runs + 1000 random instances: {out_of_range} weights outside [{w_min}, 1]; {unclipped} unclipped classes, worst mass gap {worst_gap:.1e}",
            reports.len()
        ),
    )
}

fn run_pipeline(dir: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_flowssl"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("FLOWSSL_CONFIG")
        .args(["pipeline", "-o", "out"])
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if !run_pipeline(a.path()) || !run_pipeline(b.path()) {
        return outcome(false, "pipeline run failed".into());
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join("out").join(n)).ok() != std::fs::read(b.path().join("out").join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    let extra = std::fs::read_dir(b.path().join("out")).unwrap().count() != names.len();
    outcome(
        differing.is_empty() && !extra && !names.is_empty(),
        format!("{} artifacts compared, differing {:?}, {:.1} s", names.len(), differing, secs(start.elapsed())),
    )
}

fn pcap_path() -> Outcome {
    let expected = expected_flows();
    let dir = tempfile::tempdir().unwrap();
    let mut worst = 0.0f64;
    let mut counts = Vec::new();
    let mut packets_ok = true;
    for (big_endian, nanos) in [(false, true), (true, false)] {
        let path = dir.path().join(format!("fixture_{big_endian}_{nanos}.pcap"));
        capture(big_endian, nanos).write(&path).unwrap();
        let (ds, stats) = extract(&[path], &FeatureConfig::default()).unwrap();
        packets_ok &= stats.accepted == capture_packets().len() as u64;
        counts.push(ds.len());
        if ds.len() != expected.len() {
            continue;
        }
        let names = ds.schema.names();
        for (row, (_, values)) in expected.iter().enumerate() {
            for (name, want) in values {
                match names.iter().position(|n| n == name) {
                    Some(c) => worst = worst.max((ds.features[(row, c)] - want).abs()),
                    None => worst = f64::INFINITY,
                }
            }
        }
    }
    outcome(
        packets_ok && counts.iter().all(|&c| c == expected.len()) && worst <= 1e-9,
        format!("flows {counts:?} (expected {}), worst feature error {worst:.1e}", expected.len()),
    )
}

fn main() -> ExitCode {
    let mut reports = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, title: &'static str, o: Outcome| {
        println!("{} criterion {n}: {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, title, o));
    };
    report(1, "gradient integrity", gradient_integrity());
    report(2, "oracle equivalence", oracle_equivalence());
    report(3, "CL noise separation", noise_separation(&mut reports));
    report(4, "ablation direction", ablation_direction(&mut reports));
    report(5, "fusion dominance", fusion_dominance());
    report(6, "constraint machinery", constraint_machinery());
    report(7, "weight-range law", weight_range(&reports));
    report(8, "determinism", determinism());
    report(9, "pcap path", pcap_path());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
