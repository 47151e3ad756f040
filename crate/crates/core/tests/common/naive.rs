//! Straight-line reference implementations. Nothing here calls into the
//! library's numeric routines.

use std::collections::HashMap;

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Mean over all `2N` anchorings of `−log(e^{s⁺/τ} / Σ_{k≠a} e^{s_k/τ})`.
pub fn nt_xent_batch(v1: &[Vec<f64>], v2: &[Vec<f64>], tau: f64) -> f64 {
    let n = v1.len();
    let views: Vec<&Vec<f64>> = v1.iter().chain(v2.iter()).collect();
    let mut total = 0.0;
    for a in 0..2 * n {
        let pos = if a < n { a + n } else { a - n };
        let mut denom = 0.0;
        for k in 0..2 * n {
            if k != a {
                denom += (cosine(views[a], views[k]) / tau).exp();
            }
        }
        total -= ((cosine(views[a], views[pos]) / tau).exp() / denom).ln();
    }
    total / (2 * n) as f64
}

/// `Q[r][j]` sums the probability of class `r` over rows labeled `j`.
pub fn confident_joint(probs: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut q = vec![vec![0.0; k]; k];
    for r in 0..k {
        for j in 0..k {
            for i in 0..labels.len() {
                if labels[i] == j {
                    q[r][j] += probs[i][r];
                }
            }
        }
    }
    let mut rho = vec![0.0; k];
    for j in 0..k {
        let mut col = 0.0;
        for row in q.iter() {
            col += row[j];
        }
        if col > 0.0 {
            rho[j] = q[j][j] / col;
        }
    }
    (q, rho)
}

/// Smallest value whose cumulative count reaches `q·n` (at least one).
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let need = q * values.len() as f64;
    let mut best = f64::INFINITY;
    for &v in values {
        let count = values.iter().filter(|&&x| x <= v).count() as f64;
        if count >= need && v < best {
            best = v;
        }
    }
    best
}

/// The `k`-th smallest value (0-based) by counting, without sorting.
pub fn kth_smallest(values: &[f64], k: usize) -> f64 {
    for &x in values {
        let below = values.iter().filter(|&&y| y < x).count();
        let at_most = values.iter().filter(|&&y| y <= x).count();
        if below <= k && k < at_most {
            return x;
        }
    }
    unreachable!("k is out of range")
}

pub fn median(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        kth_smallest(values, n / 2)
    } else {
        (kth_smallest(values, n / 2 - 1) + kth_smallest(values, n / 2)) / 2.0
    }
}

pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

pub struct ClassSummary {
    pub threshold: f64,
    pub median: f64,
    pub mad: f64,
}

pub fn class_summary(scores: &[f64], labels: &[usize], class: usize, q: f64) -> Option<ClassSummary> {
    let s: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == class)
        .map(|(&v, _)| v)
        .collect();
    if s.is_empty() {
        return None;
    }
    Some(ClassSummary {
        threshold: nearest_rank(&s, q),
        median: median(&s),
        mad: mad(&s),
    })
}

pub fn logistic_weights(scores: &[f64], labels: &[usize], k: usize, q: f64, w_min: f64, gamma: f64, eps_sigma: f64) -> Vec<f64> {
    let summaries: Vec<Option<ClassSummary>> = (0..k).map(|c| class_summary(scores, labels, c, q)).collect();
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let c = summaries[y].as_ref().unwrap();
            let sigma = if c.mad > eps_sigma { c.mad } else { eps_sigma };
            let z = (s - c.threshold) / (gamma * sigma);
            w_min + (1.0 - w_min) / (1.0 + (-z).exp())
        })
        .collect()
}

/// Rescaled and clipped weights, and the retained mass of every class.
pub fn balanced_retention(w: &[f64], labels: &[usize], rho: &[f64], w_min: f64, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let k = rho.len();
    let mut out = vec![0.0; w.len()];
    let mut retained = vec![0.0; k];
    for j in 0..k {
        let mut n = 0.0;
        let mut mass = 0.0;
        for i in 0..w.len() {
            if labels[i] == j {
                n += 1.0;
                mass += w[i];
            }
        }
        let a = rho[j] * n / if mass > eps { mass } else { eps };
        for i in 0..w.len() {
            if labels[i] == j {
                let mut v = a * w[i];
                if v < w_min {
                    v = w_min;
                }
                if v > 1.0 {
                    v = 1.0;
                }
                out[i] = v;
                retained[j] += v;
            }
        }
    }
    (out, retained)
}

pub fn confusion_counts(truth: &[usize], pred: &[usize]) -> HashMap<(usize, usize), u64> {
    let mut m = HashMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        *m.entry((t, p)).or_insert(0) += 1;
    }
    m
}

pub struct Scores {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Per-class scores from direct pair counting; `F1 = 2tp / (2tp + fp + fn)`.
pub fn scores(truth: &[usize], pred: &[usize], k: usize) -> Scores {
    let n = truth.len() as f64;
    let mut correct = 0.0;
    for i in 0..truth.len() {
        if truth[i] == pred[i] {
            correct += 1.0;
        }
    }
    let mut out = Scores {
        accuracy: safe_div(correct, n),
        precision: vec![0.0; k],
        recall: vec![0.0; k],
        f1: vec![0.0; k],
        macro_f1: 0.0,
        weighted_f1: 0.0,
    };
    for c in 0..k {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..truth.len() {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        out.precision[c] = safe_div(tp, tp + fp);
        out.recall[c] = safe_div(tp, tp + fn_);
        out.f1[c] = safe_div(2.0 * tp, 2.0 * tp + fp + fn_);
        out.macro_f1 += out.f1[c] / k as f64;
        out.weighted_f1 += out.f1[c] * (tp + fn_);
    }
    out.weighted_f1 = safe_div(out.weighted_f1, n);
    out
}

/// Weighted symmetric cross-entropy as a double loop over rows and classes.
#[allow(clippy::too_many_arguments)]
pub fn sce(probs: &[Vec<f64>], labels: &[usize], weights: &[f64], alpha: f64, beta: f64, eps: f64) -> f64 {
    let n = probs.len();
    let mut total = 0.0;
    for i in 0..n {
        let k = probs[i].len();
        let mut ce = 0.0;
        let mut rce = 0.0;
        for c in 0..k {
            let t = if c == labels[i] { 1.0 - eps } else { eps / (k - 1) as f64 };
            ce -= t * probs[i][c].ln();
            rce -= probs[i][c] * t.ln();
        }
        total += weights[i] * (alpha * ce + beta * rce);
    }
    total / n as f64
}
