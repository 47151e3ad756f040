//! Algebraic identities among continuous flow features.
//!
//! Each [`Constraint`] names a derived coordinate `a` and two parents `b`, `c`
//! in the continuous slice of a feature row. The same set drives two things:
//! the L1 residual penalty on autoencoder reconstructions, and the single-pass
//! projection that repairs augmented contrastive views. All residuals are in
//! raw feature units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Floor applied to every ratio denominator.
pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `a = b / max(c − offset, δ)`
    Ratio,
    /// `a = b + c`
    Sum,
    /// `a = b · c`
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub phi: f64,
    /// Subtracted from `c` before flooring; only meaningful for ratios.
    #[serde(default)]
    pub offset: f64,
}

impl Constraint {
    pub fn ratio(a: usize, b: usize, c: usize, phi: f64) -> Self {
        Self {
            kind: ConstraintKind::Ratio,
            a,
            b,
            c,
            phi,
            offset: 0.0,
        }
    }

    pub fn sum(a: usize, b: usize, c: usize, phi: f64) -> Self {
        Self {
            kind: ConstraintKind::Sum,
            a,
            b,
            c,
            phi,
            offset: 0.0,
        }
    }

    pub fn product(a: usize, b: usize, c: usize, phi: f64) -> Self {
        Self {
            kind: ConstraintKind::Product,
            a,
            b,
            c,
            phi,
            offset: 0.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Value of `a` implied by the parents.
    #[inline]
    pub fn target(&self, x: &[f64], delta: f64) -> f64 {
        let (b, c) = (x[self.b], x[self.c]);
        match self.kind {
            ConstraintKind::Ratio => b / (c - self.offset).max(delta),
            ConstraintKind::Sum => b + c,
            ConstraintKind::Product => b * c,
        }
    }

    #[inline]
    pub fn residual(&self, x: &[f64], delta: f64) -> f64 {
        x[self.a] - self.target(x, delta)
    }

    /// Ratios are only defined where the shifted denominator exceeds `delta`.
    pub fn in_domain(&self, x: &[f64], delta: f64) -> bool {
        self.kind != ConstraintKind::Ratio || x[self.c] - self.offset > delta
    }

    /// Partial derivatives of the residual with respect to `(a, b, c)`.
    fn residual_partials(&self, x: &[f64], delta: f64) -> (f64, f64, f64) {
        let (b, c) = (x[self.b], x[self.c]);
        match self.kind {
            ConstraintKind::Ratio => {
                let den = c - self.offset;
                if den > delta {
                    (1.0, -1.0 / den, b / (den * den))
                } else {
                    (1.0, -1.0 / delta, 0.0)
                }
            }
            ConstraintKind::Sum => (1.0, -1.0, -1.0),
            ConstraintKind::Product => (1.0, -c, -b),
        }
    }
}

/// Residual of one constraint on a continuous vector.
pub fn residual(constraint: &Constraint, x_cont: &[f64], delta: f64) -> f64 {
    constraint.residual(x_cont, delta)
}

/// Named form used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub a: String,
    pub b: String,
    pub c: String,
    pub phi: f64,
    #[serde(default)]
    pub offset: f64,
}

/// An ordered, acyclic family of constraints over a continuous slice of fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    delta: f64,
    width: usize,
    /// Application order: parents are always settled before their children.
    order: Vec<usize>,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>, width: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config(format!("denominator floor {delta} must be positive")));
        }
        for (m, c) in constraints.iter().enumerate() {
            if c.a == c.b || c.a == c.c || c.b == c.c {
                return Err(Error::config(format!(
                    "constraint {m}: feature indices must be distinct"
                )));
            }
            if c.a >= width || c.b >= width || c.c >= width {
                return Err(Error::config(format!(
                    "constraint {m}: index outside the {width} continuous features"
                )));
            }
            if !(c.phi.is_finite() && c.phi >= 0.0) || !c.offset.is_finite() {
                return Err(Error::config(format!("constraint {m}: weight must be finite and ≥ 0")));
            }
            if let Some(other) = constraints[..m].iter().position(|o| o.a == c.a) {
                return Err(Error::config(format!(
                    "constraints {other} and {m} both derive feature {}",
                    c.a
                )));
            }
        }
        let order = topological_order(&constraints)?;
        Ok(Self {
            constraints,
            delta,
            width,
            order,
        })
    }

    pub fn empty(width: usize) -> Self {
        Self {
            constraints: Vec::new(),
            delta: DEFAULT_DELTA,
            width,
            order: Vec::new(),
        }
    }

    /// Resolve named constraints against the continuous feature names.
    pub fn from_specs(specs: &[ConstraintSpec], continuous_names: &[String], delta: f64) -> Result<Self> {
        let find = |name: &str| {
            continuous_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::config(format!("constraint references unknown continuous feature `{name}`")))
        };
        let constraints = specs
            .iter()
            .map(|s| {
                Ok(Constraint {
                    kind: s.kind,
                    a: find(&s.a)?,
                    b: find(&s.b)?,
                    c: find(&s.c)?,
                    phi: s.phi,
                    offset: s.offset,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(constraints, continuous_names.len(), delta)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Copy with every weight multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.constraints {
            c.phi *= scale;
        }
        out
    }

    pub fn residuals(&self, x_cont: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.residual(x_cont, self.delta))
            .collect()
    }

    /// `mean_rows Σ_m φ_m |g_m(x)|` and its (sub)gradient, with `sign(0) = 0`.
    pub fn penalty(&self, batch: &Matrix) -> Result<(f64, Matrix)> {
        self.penalty_scaled(batch, None)
    }

    /// Like [`penalty`](Self::penalty) but each residual is divided by
    /// `scales[m]` first, which keeps penalties comparable across features
    /// measured in very different units.
    ///
    /// Rows whose ratio denominator is at or below the floor contribute
    /// nothing to that rule: the floored target `b / δ` is not a meaningful
    /// value to pull a reconstruction towards.
    pub fn penalty_scaled(&self, batch: &Matrix, scales: Option<&[f64]>) -> Result<(f64, Matrix)> {
        if batch.cols() != self.width {
            return Err(Error::dim(format!(
                "batch has {} columns, constraints cover {}",
                batch.cols(),
                self.width
            )));
        }
        if let Some(s) = scales {
            if s.len() != self.constraints.len() {
                return Err(Error::dim("one scale per constraint required"));
            }
        }
        let n = batch.rows().max(1) as f64;
        let mut grad = Matrix::zeros(batch.rows(), batch.cols());
        let mut loss = 0.0;
        for r in 0..batch.rows() {
            let x = batch.row(r);
            for (m, c) in self.constraints.iter().enumerate() {
                if !c.in_domain(x, self.delta) {
                    continue;
                }
                let scale = scales.map_or(1.0, |s| s[m]);
                let g = c.residual(x, self.delta) / scale;
                loss += c.phi * g.abs();
                if g != 0.0 {
                    let s = c.phi * g.signum() / (scale * n);
                    let (da, db, dc) = c.residual_partials(x, self.delta);
                    let row = grad.row_mut(r);
                    row[c.a] += s * da;
                    row[c.b] += s * db;
                    row[c.c] += s * dc;
                }
            }
        }
        Ok((loss / n, grad))
    }

    /// Restore every identity by recomputing each derived coordinate from its
    /// parents, in dependency order. Coordinates not derived by any
    /// constraint are never modified.
    pub fn project(&self, x_cont: &mut [f64]) {
        for &m in &self.order {
            let c = &self.constraints[m];
            x_cont[c.a] = c.target(x_cont, self.delta);
        }
    }

    /// Projection for a standardized continuous vector: identities are
    /// enforced in raw units, `raw = z·std + mean`.
    pub fn project_standardized(&self, z_cont: &mut [f64], mean: &[f64], std: &[f64]) {
        if self.constraints.is_empty() {
            return;
        }
        let mut raw: Vec<f64> = z_cont
            .iter()
            .zip(mean.iter().zip(std))
            .map(|(z, (m, s))| z * s + m)
            .collect();
        for &m in &self.order {
            let c = &self.constraints[m];
            let a = c.target(&raw, self.delta);
            raw[c.a] = a;
            z_cont[c.a] = (a - mean[c.a]) / std[c.a];
        }
    }
}

fn topological_order(constraints: &[Constraint]) -> Result<Vec<usize>> {
    let n = constraints.len();
    // constraint j depends on i when i derives one of j's parents
    let depends_on = |j: usize, i: usize| {
        let (cj, ci) = (&constraints[j], &constraints[i]);
        ci.a == cj.b || ci.a == cj.c
    };
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&j| !done[j] && (0..n).all(|i| done[i] || i == j || !depends_on(j, i)));
        match next {
            Some(j) => {
                if depends_on(j, j) {
                    return Err(Error::config(format!("constraint {j} depends on itself")));
                }
                done[j] = true;
                order.push(j);
            }
            None => {
                return Err(Error::config(
                    "constraint graph contains a cycle; derived features must form a DAG",
                ))
            }
        }
    }
    Ok(order)
}
