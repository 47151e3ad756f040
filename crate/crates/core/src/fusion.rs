//! Per-flow consolidation of two branches' pseudo-labels: agreement first,
//! then the more confident branch, then the larger top-1/top-2 margin, and
//! branch `a` when even the margins tie.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPrediction {
    pub probs: Matrix,
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
    pub margin: Vec<f64>,
}

impl BranchPrediction {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }
}

/// Top-1 label, top-1 probability and top-1 minus top-2 gap of every row.
pub fn summarize(probs: &Matrix) -> Result<BranchPrediction> {
    let mut labels = Vec::with_capacity(probs.rows());
    let mut confidence = Vec::with_capacity(probs.rows());
    let mut margin = Vec::with_capacity(probs.rows());
    for (i, row) in probs.iter_rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if !((sum - 1.0).abs() <= 1e-6) || row.iter().any(|p| *p < 0.0) {
            return Err(Error::input(format!("probability row {i} sums to {sum}, not 1")));
        }
        let top = argmax(row);
        let second = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != top)
            .map(|(_, &p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        labels.push(top);
        confidence.push(row[top]);
        margin.push(if second.is_finite() { row[top] - second } else { row[top] });
    }
    Ok(BranchPrediction {
        probs: probs.clone(),
        labels,
        confidence,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Agree,
    ConfA,
    ConfB,
    MarginA,
    MarginB,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Agree => "agree",
            Provenance::ConfA => "conf_a",
            Provenance::ConfB => "conf_b",
            Provenance::MarginA => "margin_a",
            Provenance::MarginB => "margin_b",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub labels: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

/// Decide one row. Comparisons are exact.
pub fn fuse_row(la: usize, sa: f64, ma: f64, lb: usize, sb: f64, mb: f64) -> (usize, Provenance) {
    if la == lb {
        (la, Provenance::Agree)
    } else if sa > sb {
        (la, Provenance::ConfA)
    } else if sb > sa {
        (lb, Provenance::ConfB)
    } else if mb > ma {
        (lb, Provenance::MarginB)
    } else {
        (la, Provenance::MarginA)
    }
}

pub fn fuse(a: &BranchPrediction, b: &BranchPrediction) -> Result<Fused> {
    if a.len() != b.len() || a.classes() != b.classes() {
        return Err(Error::dim(format!(
            "branch a has {}×{} predictions, branch b {}×{}",
            a.len(),
            a.classes(),
            b.len(),
            b.classes()
        )));
    }
    let (labels, provenance) = (0..a.len())
        .map(|i| fuse_row(a.labels[i], a.confidence[i], a.margin[i], b.labels[i], b.confidence[i], b.margin[i]))
        .unzip();
    Ok(Fused { labels, provenance })
}

/// Row id, fused label, both confidences and margins, provenance.
pub fn write_fused_csv(path: &Path, a: &BranchPrediction, b: &BranchPrediction, fused: &Fused) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..fused.labels.len())
        .map(|i| {
            vec![
                i.to_string(),
                fused.labels[i].to_string(),
                format!("{:?}", a.confidence[i]),
                format!("{:?}", b.confidence[i]),
                format!("{:?}", a.margin[i]),
                format!("{:?}", b.margin[i]),
                fused.provenance[i].to_string(),
            ]
        })
        .collect();
    crate::io::write_csv_rows(
        path,
        &["row_id", "pseudo_label", "s_ae", "s_tabcl", "m_ae", "m_tabcl", "provenance"],
        &rows,
    )
}

/// One branch's pseudo-labels: `row_id,pseudo_label,confidence,margin,p_0,…`.
pub fn write_branch_csv(path: &Path, pred: &BranchPrediction) -> Result<()> {
    let mut header = vec!["row_id".to_string(), "pseudo_label".into(), "confidence".into(), "margin".into()];
    header.extend((0..pred.classes()).map(|k| format!("p_{k}")));
    let rows: Vec<Vec<String>> = (0..pred.len())
        .map(|i| {
            let mut r = vec![
                i.to_string(),
                pred.labels[i].to_string(),
                format!("{:?}", pred.confidence[i]),
                format!("{:?}", pred.margin[i]),
            ];
            r.extend(pred.probs.row(i).iter().map(|p| format!("{p:?}")));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    crate::io::write_csv_rows(path, &header, &rows)
}

/// Read a file written by [`write_branch_csv`]; labels, confidences and
/// margins are recomputed from the probability columns.
pub fn read_branch_csv(path: &Path) -> Result<BranchPrediction> {
    let text = crate::io::read_text(path)?;
    let fmt = |m: String| Error::Format(m).in_file(path);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| fmt(e.to_string()))?.clone();
    let cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("p_")).collect();
    if cols.len() < 2 {
        return Err(fmt("expected at least two `p_<class>` columns".into()));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        for &c in &cols {
            let v = rec.get(c).unwrap_or("").trim();
            data.push(
                v.parse::<f64>()
                    .map_err(|_| fmt(format!("line {}: `{v}` is not a probability", i + 2)))?,
            );
        }
        rows += 1;
    }
    summarize(&Matrix::from_vec(rows, cols.len(), data)?).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(rows: &[[f64; 2]]) -> BranchPrediction {
        summarize(&Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn summary_fields() {
        let p = summarize(&Matrix::from_rows(&[[0.7, 0.2, 0.1]]).unwrap()).unwrap();
        assert_eq!(p.labels, vec![0]);
        assert_eq!(p.confidence, vec![0.7]);
        assert!((p.margin[0] - 0.5).abs() < 1e-15);
        let u = summarize(&Matrix::filled(1, 4, 0.25)).unwrap();
        assert_eq!((u.labels[0], u.confidence[0], u.margin[0]), (0, 0.25, 0.0));
    }

    #[test]
    fn bad_row_sum_names_row() {
        let err = summarize(&Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.6]]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn rule_cases() {
        let f = fuse(&pred(&[[0.3, 0.7]]), &pred(&[[0.4, 0.6]])).unwrap();
        assert_eq!((f.labels[0], f.provenance[0]), (1, Provenance::Agree));
        let f = fuse(&pred(&[[0.7, 0.3]]), &pred(&[[0.4, 0.6]])).unwrap();
        assert_eq!((f.labels[0], f.provenance[0]), (0, Provenance::ConfA));
        let f = fuse(&pred(&[[0.6, 0.4]]), &pred(&[[0.4, 0.6]])).unwrap();
        assert_eq!((f.labels[0], f.provenance[0]), (0, Provenance::MarginA));
        let f = fuse(&pred(&[[0.4, 0.6]]), &pred(&[[0.8, 0.2]])).unwrap();
        assert_eq!((f.labels[0], f.provenance[0]), (0, Provenance::ConfB));
    }

    #[test]
    fn equal_confidence_larger_margin_wins() {
        let a = summarize(&Matrix::from_rows(&[[0.5, 0.3, 0.2]]).unwrap()).unwrap();
        let b = summarize(&Matrix::from_rows(&[[0.1, 0.5, 0.4]]).unwrap()).unwrap();
        let f = fuse(&a, &b).unwrap();
        assert_eq!((f.labels[0], f.provenance[0]), (0, Provenance::MarginA));
        let f = fuse(&b, &a).unwrap();
        assert_eq!((f.labels[0], f.provenance[0]), (0, Provenance::MarginB));
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            fuse(&pred(&[[0.5, 0.5]]), &pred(&[[0.5, 0.5], [0.5, 0.5]])),
            Err(Error::Dimension(_))
        ));
    }
}
