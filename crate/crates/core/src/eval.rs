//! Confusion matrices and classification metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows indexed by the true class and columns by the prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn save_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut header = vec!["true\\pred".to_string()];
        header.extend(names.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let mut r = vec![names[k].clone()];
                r.extend(row.iter().map(u64::to_string));
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        crate::io::write_csv_rows(path, &header, &rows)
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::input(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        if t >= classes || p >= classes {
            return Err(Error::input(format!("row {i}: label outside {classes} classes")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub name: String,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest accuracy.
    pub accuracy: f64,
    /// Set when a metric had a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub total: u64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Aggregate,
    /// Averaged with the true-class supports as weights.
    pub weighted_avg: Aggregate,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-class and aggregate metrics. Undefined ratios are 0 and flagged.
pub fn metrics(cm: &ConfusionMatrix, names: &[String]) -> MetricsReport {
    let k = cm.classes();
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let support: u64 = cm.counts[c].iter().sum();
            let predicted: u64 = (0..k).map(|r| cm.counts[r][c]).sum();
            let fp = predicted - tp;
            let fn_ = support - tp;
            let tn = total - tp - fp - fn_;
            let p = ratio(tp, tp + fp);
            let r = ratio(tp, tp + fn_);
            let f1 = match (p, r) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            ClassMetrics {
                class: c,
                name: names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                support,
                tp,
                fp,
                fn_,
                tn,
                precision: p.unwrap_or(0.0),
                recall: r.unwrap_or(0.0),
                f1: f1.unwrap_or(0.0),
                accuracy: ratio(tp + tn, total).unwrap_or(0.0),
                undefined: p.is_none() || r.is_none(),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k.max(1) as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };
    MetricsReport {
        accuracy: ratio(cm.trace(), total).unwrap_or(0.0),
        total,
        macro_avg: Aggregate {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        weighted_avg: Aggregate {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        },
        per_class,
        confusion: cm.clone(),
    }
}

pub fn evaluate(truth: &[usize], pred: &[usize], names: &[String]) -> Result<MetricsReport> {
    Ok(metrics(&confusion(truth, pred, names.len())?, names))
}

impl MetricsReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// One row per class, then `macro avg`, `weighted avg` and `accuracy` rows.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = |v: f64| format!("{v:.6}");
        let mut rows: Vec<Vec<String>> = self
            .per_class
            .iter()
            .map(|m| {
                vec![
                    m.name.clone(),
                    f(m.precision),
                    f(m.recall),
                    f(m.f1),
                    f(m.accuracy),
                    m.support.to_string(),
                ]
            })
            .collect();
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            rows.push(vec![
                name.into(),
                f(a.precision),
                f(a.recall),
                f(a.f1),
                String::new(),
                self.total.to_string(),
            ]);
        }
        rows.push(vec![
            "accuracy".into(),
            String::new(),
            String::new(),
            String::new(),
            f(self.accuracy),
            self.total.to_string(),
        ]);
        crate::io::write_csv_rows(path, &["class", "precision", "recall", "f1", "accuracy", "support"], &rows)
    }

    /// Gnuplot-style bar data: `index name precision recall f1`.
    pub fn save_dat(&self, path: &Path) -> Result<()> {
        let mut text = String::from("# index name precision recall f1\n");
        for m in &self.per_class {
            text.push_str(&format!(
                "{} {} {:.6} {:.6} {:.6}\n",
                m.class, m.name, m.precision, m.recall, m.f1
            ));
        }
        crate::io::write_text(path, &text)
    }
}

/// Gnuplot-style histogram blocks, one per series, separated by two blank lines.
pub fn write_histogram_dat(path: &Path, series: &[(String, Vec<usize>)]) -> Result<()> {
    let mut text = String::new();
    for (name, counts) in series {
        let bins = counts.len().max(1) as f64;
        text.push_str(&format!("# {name}\n# bin_center count\n"));
        for (b, c) in counts.iter().enumerate() {
            text.push_str(&format!("{:.4} {c}\n", (b as f64 + 0.5) / bins));
        }
        text.push_str("\n\n");
    }
    crate::io::write_text(path, &text)
}
