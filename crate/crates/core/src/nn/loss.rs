use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Lower clamp applied to every `log p`.
pub const LOG_FLOOR: f64 = -27.631021115928547; // ln(1e-12)

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise log-softmax, each entry clamped below at `ln(1e-12)`.
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| (v - lse).max(LOG_FLOOR)).collect()
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        m[(i, y)] = 1.0;
    }
    m
}

/// Weighted softmax cross-entropy on logits.
///
/// `loss = (1/n) Σ_i w_i · (−Σ_k t_ik · log p_ik)`; the batch mean divides by
/// the row count, not by the weight total. Terms whose `log p` hit the floor
/// contribute no gradient.
pub fn softmax_ce_loss(
    logits: &Matrix,
    targets: &Matrix,
    sample_weights: &[f64],
) -> Result<(f64, Matrix)> {
    if logits.shape() != targets.shape() {
        return Err(Error::dim(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if sample_weights.len() != logits.rows() {
        return Err(Error::dim(format!(
            "{} weights for {} rows",
            sample_weights.len(),
            logits.rows()
        )));
    }
    if !logits.is_finite() {
        return Err(Error::numeric("non-finite logits"));
    }
    let n = logits.rows().max(1) as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in 0..logits.rows() {
        let w = sample_weights[i];
        if w == 0.0 {
            continue;
        }
        let logp = log_softmax_row(logits.row(i));
        let t = targets.row(i);
        let mut row_loss = 0.0;
        let mut active_mass = 0.0;
        for k in 0..t.len() {
            row_loss -= t[k] * logp[k];
            if logp[k] > LOG_FLOOR {
                active_mass += t[k];
            }
        }
        loss += w * row_loss;
        let g = grad.row_mut(i);
        for k in 0..t.len() {
            let p = logp[k].exp();
            let active_t = if logp[k] > LOG_FLOOR { t[k] } else { 0.0 };
            g[k] = w * (active_mass * p - active_t) / n;
        }
    }
    Ok((loss / n, grad))
}

/// Mean squared error over every element.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = pred.data().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}
