use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Standard deviations below this are treated as this value.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical { vocabulary: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureDef {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical(name: &str, vocabulary: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                vocabulary: vocabulary.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous)
    }
}

/// Ordered feature columns, each continuous or categorical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureDef>,
}

impl Schema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let schema = Self { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::config(format!("feature name `{}` appears twice", f.name)));
            }
            if matches!(f.name.as_str(), "label" | "pseudo_label" | "weight" | "row_id") {
                return Err(Error::config(format!("feature name `{}` is reserved", f.name)));
            }
            if let FeatureKind::Categorical { vocabulary } = &f.kind {
                if vocabulary.is_empty() {
                    return Err(Error::config(format!("categorical `{}` has no vocabulary", f.name)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].is_continuous())
            .collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| !self.features[i].is_continuous())
            .collect()
    }

    pub fn continuous_names(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.is_continuous())
            .map(|f| f.name.clone())
            .collect()
    }

    /// Vocabulary sizes of the categorical columns, in column order.
    pub fn categorical_sizes(&self) -> Vec<usize> {
        self.features
            .iter()
            .filter_map(|f| match &f.kind {
                FeatureKind::Categorical { vocabulary } => Some(vocabulary.len()),
                FeatureKind::Continuous => None,
            })
            .collect()
    }

    /// Width of the model input: continuous columns then one-hot blocks.
    pub fn encoded_width(&self) -> usize {
        self.continuous_indices().len() + self.categorical_sizes().iter().sum::<usize>()
    }

    /// Encode raw feature rows: continuous values first, then one one-hot
    /// block per categorical column.
    pub fn encode(&self, rows: &Matrix) -> Matrix {
        let cont = self.continuous_indices();
        let cat = self.categorical_indices();
        let sizes = self.categorical_sizes();
        let width = self.encoded_width();
        let mut out = Matrix::zeros(rows.rows(), width);
        for r in 0..rows.rows() {
            let src = rows.row(r);
            let dst = out.row_mut(r);
            for (j, &c) in cont.iter().enumerate() {
                dst[j] = src[c];
            }
            let mut offset = cont.len();
            for (&c, &size) in cat.iter().zip(&sizes) {
                let v = src[c] as usize;
                dst[offset + v.min(size - 1)] = 1.0;
                offset += size;
            }
        }
        out
    }
}

/// Per-column mean/std of the continuous features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit on the continuous columns of `ds` (population std, floored).
    pub fn fit(ds: &Dataset) -> Self {
        let cont = ds.schema.continuous_indices();
        let n = ds.len();
        let mut mean = Vec::with_capacity(cont.len());
        let mut std = Vec::with_capacity(cont.len());
        for &c in &cont {
            let col: Vec<f64> = (0..n).map(|r| ds.features[(r, c)]).collect();
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if n == 0 {
                mean.push(0.0);
                std.push(1.0);
                continue;
            }
            // an exact mean keeps constant columns at exactly zero
            let m = if lo == hi { lo } else { col.iter().sum::<f64>() / n as f64 };
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Self {
            columns: ds.schema.continuous_names(),
            mean,
            std,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Tabular flows with optional ground-truth labels, pseudo-labels and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    /// Row-major values; categorical columns hold vocabulary indices.
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub pseudo_labels: Option<Vec<usize>>,
    pub weights: Option<Vec<f64>>,
    /// Set when the continuous columns are standardized.
    pub transform: Option<Standardizer>,
}

impl Dataset {
    pub fn new(schema: Schema, features: Matrix) -> Result<Self> {
        schema.validate()?;
        if features.cols() != schema.len() {
            return Err(Error::dim(format!(
                "{} feature columns for a {}-column schema",
                features.cols(),
                schema.len()
            )));
        }
        let ds = Self {
            schema,
            features,
            labels: None,
            pseudo_labels: None,
            weights: None,
            transform: None,
        };
        ds.check_categoricals()?;
        Ok(ds)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::dim(format!("{} labels for {} rows", labels.len(), self.len())));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_pseudo_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::dim(format!("{} pseudo-labels for {} rows", labels.len(), self.len())));
        }
        self.pseudo_labels = Some(labels);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::dim(format!("{} weights for {} rows", weights.len(), self.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(Error::input(format!("weight {w} outside (0, 1]")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    fn check_categoricals(&self) -> Result<()> {
        for (c, f) in self.schema.features.iter().enumerate() {
            if let FeatureKind::Categorical { vocabulary } = &f.kind {
                for r in 0..self.len() {
                    let v = self.features[(r, c)];
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= vocabulary.len() {
                        return Err(Error::input(format!(
                            "row {r}: `{}` holds invalid category index {v}",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    /// One past the largest label found in `labels` or `pseudo_labels`.
    pub fn observed_classes(&self) -> usize {
        let max = |v: &Option<Vec<usize>>| v.as_ref().and_then(|l| l.iter().max().copied());
        match (max(&self.labels), max(&self.pseudo_labels)) {
            (Some(a), Some(b)) => a.max(b) + 1,
            (Some(a), None) | (None, Some(a)) => a + 1,
            (None, None) => 0,
        }
    }

    /// Model input matrix (see [`Schema::encode`]).
    pub fn encode(&self) -> Matrix {
        self.schema.encode(&self.features)
    }

    /// Continuous slice in raw units (undoing the standardization if any).
    pub fn continuous_raw(&self) -> Matrix {
        let cont = self.schema.continuous_indices();
        let mut out = Matrix::zeros(self.len(), cont.len());
        for r in 0..self.len() {
            for (j, &c) in cont.iter().enumerate() {
                let v = self.features[(r, c)];
                out[(r, j)] = match &self.transform {
                    Some(t) => v * t.std[j] + t.mean[j],
                    None => v,
                };
            }
        }
        out
    }

    /// Fit a standardizer on this dataset and apply it.
    pub fn standardize(&self) -> Result<Dataset> {
        if self.transform.is_some() {
            return Err(Error::State("dataset is already standardized".into()));
        }
        let t = Standardizer::fit(self);
        self.apply_standardizer(&t)
    }

    /// Apply a previously fitted standardizer to a raw dataset.
    pub fn apply_standardizer(&self, t: &Standardizer) -> Result<Dataset> {
        if self.transform.is_some() {
            return Err(Error::State("dataset is already standardized".into()));
        }
        if t.columns != self.schema.continuous_names() {
            return Err(Error::config("standardizer columns do not match the schema"));
        }
        let cont = self.schema.continuous_indices();
        let mut out = self.clone();
        for r in 0..self.len() {
            for (j, &c) in cont.iter().enumerate() {
                out.features[(r, c)] = (self.features[(r, c)] - t.mean[j]) / t.std[j];
            }
        }
        out.transform = Some(t.clone());
        Ok(out)
    }

    /// Back to raw units.
    pub fn destandardize(&self) -> Dataset {
        let Some(t) = &self.transform else {
            return self.clone();
        };
        let cont = self.schema.continuous_indices();
        let mut out = self.clone();
        for r in 0..self.len() {
            for (j, &c) in cont.iter().enumerate() {
                out.features[(r, c)] = self.features[(r, c)] * t.std[j] + t.mean[j];
            }
        }
        out.transform = None;
        out
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick_u = |v: &Option<Vec<usize>>| v.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect());
        Dataset {
            schema: self.schema.clone(),
            features: self.features.select_rows(rows),
            labels: pick_u(&self.labels),
            pseudo_labels: pick_u(&self.pseudo_labels),
            weights: self
                .weights
                .as_ref()
                .map(|w| rows.iter().map(|&i| w[i]).collect()),
            transform: self.transform.clone(),
        }
    }

    /// Write as CSV: feature columns, then `label`, `pseudo_label` and `weight`
    /// when present. Categorical values are written as vocabulary strings.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| e.in_file(path))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.schema.names();
        if self.labels.is_some() {
            header.push("label".into());
        }
        if self.pseudo_labels.is_some() {
            header.push("pseudo_label".into());
        }
        if self.weights.is_some() {
            header.push("weight".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.len() {
            record.clear();
            for (c, f) in self.schema.features.iter().enumerate() {
                let v = self.features[(r, c)];
                match &f.kind {
                    FeatureKind::Continuous => record.push(format_f64(v)),
                    FeatureKind::Categorical { vocabulary } => record.push(vocabulary[v as usize].clone()),
                }
            }
            if let Some(l) = &self.labels {
                record.push(l[r].to_string());
            }
            if let Some(l) = &self.pseudo_labels {
                record.push(l[r].to_string());
            }
            if let Some(wt) = &self.weights {
                record.push(format_f64(wt[r]));
            }
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Read a CSV whose header starts with exactly the schema's feature names.
    pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, schema).map_err(|e| e.in_file(path))
    }

    pub fn read_csv<R: std::io::Read>(input: R, schema: &Schema) -> Result<Dataset> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let names = schema.names();
        if header.len() < names.len() || header[..names.len()] != names[..] {
            return Err(Error::input(format!(
                "header does not match schema; expected columns {}",
                names.join(",")
            )));
        }
        let mut label_col = None;
        let mut pseudo_col = None;
        let mut weight_col = None;
        for (i, h) in header.iter().enumerate().skip(names.len()) {
            let slot = match h.as_str() {
                "label" => &mut label_col,
                "pseudo_label" => &mut pseudo_col,
                "weight" => &mut weight_col,
                other => return Err(Error::input(format!("unexpected column `{other}`"))),
            };
            if slot.replace(i).is_some() {
                return Err(Error::input(format!("column `{h}` appears twice")));
            }
        }
        let width = header.len();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut pseudo = Vec::new();
        let mut weights = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            if rec.len() != width {
                return Err(Error::input(format!(
                    "line {line}: {} fields, expected {width}",
                    rec.len()
                )));
            }
            for (c, f) in schema.features.iter().enumerate() {
                let raw = rec[c].trim();
                match &f.kind {
                    FeatureKind::Continuous => data.push(raw.parse::<f64>().map_err(|_| {
                        Error::input(format!("line {line}: `{}` value `{raw}` is not a number", f.name))
                    })?),
                    FeatureKind::Categorical { vocabulary } => {
                        let idx = vocabulary.iter().position(|v| v == raw).ok_or_else(|| {
                            Error::input(format!(
                                "line {line}: unknown category `{raw}` for `{}` (known: {})",
                                f.name,
                                vocabulary.join(", ")
                            ))
                        })?;
                        data.push(idx as f64);
                    }
                }
            }
            let parse_label = |col: usize| {
                rec[col].trim().parse::<usize>().map_err(|_| {
                    Error::input(format!("line {line}: `{}` is not a class index", &rec[col]))
                })
            };
            if let Some(c) = label_col {
                labels.push(parse_label(c)?);
            }
            if let Some(c) = pseudo_col {
                pseudo.push(parse_label(c)?);
            }
            if let Some(c) = weight_col {
                weights.push(rec[c].trim().parse::<f64>().map_err(|_| {
                    Error::input(format!("line {line}: weight `{}` is not a number", &rec[c]))
                })?);
            }
        }
        let rows = if names.is_empty() { 0 } else { data.len() / names.len() };
        let mut ds = Dataset::new(schema.clone(), Matrix::from_vec(rows, names.len(), data)?)?;
        if label_col.is_some() {
            ds = ds.with_labels(labels)?;
        }
        if pseudo_col.is_some() {
            ds = ds.with_pseudo_labels(pseudo)?;
        }
        if weight_col.is_some() {
            ds = ds.with_weights(weights)?;
        }
        Ok(ds)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}
