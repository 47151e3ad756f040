//! Library routines against the naive oracles on random instances. Each
//! function returns the largest absolute discrepancy of one instance.

use flowssl::cl::{
    balanced_retention, class_stats, confident_joint, logistic_weights, nearest_rank_quantile, QuantileMethod,
};
use flowssl::eval::evaluate;
use flowssl::nn::Matrix;
use flowssl::ssl::tabcl::batch_nt_xent;
use rand::Rng;

use super::{max_abs_diff, naive, probability_rows, rng, uniform_matrix};

pub const TOLERANCE: f64 = 1e-9;
pub const INSTANCES: u64 = 100;

pub type Equivalence = fn(u64) -> f64;

pub const EQUIVALENCES: [(&str, Equivalence); 7] = [
    ("nt-xent batch loss", nt_xent),
    ("confident joint", joint),
    ("nearest-rank quantile", quantile),
    ("median and MAD", median_mad),
    ("logistic weights", weights),
    ("balanced retention", retention),
    ("confusion metrics", metrics),
];

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// Scores on a coarse grid so ties are common.
fn gridded_scores(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(0..=20) as f64 / 20.0).collect()
}

fn labels_covering(r: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut l: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    for (c, slot) in l.iter_mut().take(k).enumerate() {
        *slot = c;
    }
    l
}

pub fn nt_xent(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(2..9);
    let d = r.gen_range(2..7);
    let tau = r.gen_range(0.1..1.0);
    let v1 = uniform_matrix(&mut r, n, d, -1.0, 1.0);
    let v2 = uniform_matrix(&mut r, n, d, -1.0, 1.0);
    let lib = batch_nt_xent(&v1, &v2, tau).unwrap().0;
    (lib - naive::nt_xent_batch(&rows(&v1), &rows(&v2), tau)).abs()
}

pub fn joint(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.gen_range(2..7);
    let n = r.gen_range(k..200);
    let p = probability_rows(&mut r, n, k);
    let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    let lib = confident_joint(&p, &labels);
    let (q, rho) = naive::confident_joint(&rows(&p), &labels, k);
    let mut worst = max_abs_diff(&lib.rho, &rho);
    for (a, b) in lib.q_hat.iter().zip(&q) {
        worst = worst.max(max_abs_diff(a, b));
    }
    worst
}

pub fn quantile(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..60);
    let s = gridded_scores(&mut r, n);
    let q = if seed % 10 == 0 { 0.7 } else { r.gen_range(0.0..=1.0) };
    let mut sorted = s.clone();
    sorted.sort_by(f64::total_cmp);
    (nearest_rank_quantile(&sorted, q) - naive::nearest_rank(&s, q)).abs()
}

pub fn median_mad(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.gen_range(1..5);
    let n = r.gen_range(k..80);
    let s = gridded_scores(&mut r, n);
    let labels = labels_covering(&mut r, n, k);
    let stats = class_stats(&s, &labels, k, 0.7, QuantileMethod::NearestRank, 1e-6).unwrap();
    let mut worst: f64 = 0.0;
    for (c, st) in stats.iter().enumerate() {
        let o = naive::class_summary(&s, &labels, c, 0.7).unwrap();
        worst = worst.max((st.median - o.median).abs()).max((st.mad - o.mad).abs());
    }
    worst
}

pub fn weights(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.gen_range(2..6);
    let n = r.gen_range(k..150);
    // continuous scores, plus a constant class now and then to hit the σ floor
    let mut s: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
    let labels = labels_covering(&mut r, n, k);
    if seed % 4 == 0 {
        for (v, &y) in s.iter_mut().zip(&labels) {
            if y == 0 {
                *v = 0.5;
            }
        }
    }
    let q = r.gen_range(0.5..0.9);
    let gamma = r.gen_range(1.0..6.0);
    let w_min = r.gen_range(0.0..0.5);
    let stats: Vec<_> = class_stats(&s, &labels, k, q, QuantileMethod::NearestRank, 1e-6)
        .unwrap()
        .into_iter()
        .map(Some)
        .collect();
    let lib = logistic_weights(&s, &labels, &stats, w_min, gamma);
    max_abs_diff(&lib.w, &naive::logistic_weights(&s, &labels, k, q, w_min, gamma, 1e-6))
}

pub fn retention(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.gen_range(2..6);
    let n = r.gen_range(k..200);
    let w_min = 0.2;
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(w_min..=1.0)).collect();
    let labels = labels_covering(&mut r, n, k);
    let rho: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..=1.0)).collect();
    let lib = balanced_retention(&w, &labels, &rho, w_min, 1e-9);
    let (ow, oret) = naive::balanced_retention(&w, &labels, &rho, w_min, 1e-9);
    max_abs_diff(&lib.weights, &ow).max(max_abs_diff(&lib.retained, &oret))
}

pub fn metrics(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.gen_range(2..9);
    let n = r.gen_range(1..300);
    let truth: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    // mostly right, so every regime of precision and recall shows up
    let pred: Vec<usize> = truth
        .iter()
        .map(|&t| if r.gen_bool(0.6) { t } else { r.gen_range(0..k) })
        .collect();
    let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
    let lib = evaluate(&truth, &pred, &names).unwrap();
    let counts = naive::confusion_counts(&truth, &pred);
    for t in 0..k {
        for p in 0..k {
            if lib.confusion.counts[t][p] != counts.get(&(t, p)).copied().unwrap_or(0) {
                return f64::INFINITY;
            }
        }
    }
    let o = naive::scores(&truth, &pred, k);
    let col = |f: fn(&flowssl::eval::ClassMetrics) -> f64| lib.per_class.iter().map(f).collect::<Vec<_>>();
    [
        (lib.accuracy - o.accuracy).abs(),
        max_abs_diff(&col(|m| m.precision), &o.precision),
        max_abs_diff(&col(|m| m.recall), &o.recall),
        max_abs_diff(&col(|m| m.f1), &o.f1),
        (lib.macro_avg.f1 - o.macro_f1).abs(),
        (lib.weighted_avg.f1 - o.weighted_f1).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
