use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::softmax;
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    /// Produces logits; `predict_proba` applies the softmax. Forward and
    /// backward treat the layer as linear so losses can work on logits.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in × out`, so a batch maps as `X · W + b`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

fn default_true() -> bool {
    true
}

impl Layer {
    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }
}

/// Shape of one dense layer for [`MlpModel::new`].
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self {
            width,
            activation,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }
}

/// Feed-forward network of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Layer>,
    /// Bumped by every parameter update so stale caches are detected.
    #[serde(skip)]
    version: u64,
}

/// Activations recorded by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    masks: Vec<Option<Vec<f64>>>,
}

/// One gradient per parameter plus the gradient with respect to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: Matrix,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.data().iter().all(|&v| v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

impl MlpModel {
    /// He-uniform initialised network: weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(input: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("a model needs at least one layer"));
        }
        if input == 0 {
            return Err(Error::config("model input width must be positive"));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input;
        for spec in specs {
            if spec.width == 0 {
                return Err(Error::config("layer width must be positive"));
            }
            if !(0.0..1.0).contains(&spec.dropout) {
                return Err(Error::config(format!(
                    "dropout {} outside [0, 1)",
                    spec.dropout
                )));
            }
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * spec.width)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                weight: Matrix::from_vec(fan_in, spec.width, data)?,
                bias: vec![0.0; spec.width],
                activation: spec.activation,
                dropout: spec.dropout,
                trainable: true,
            });
            fan_in = spec.width;
        }
        Ok(Self { layers, version: 0 })
    }

    /// ReLU hidden layers with a shared dropout rate, then an output layer without dropout.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs: Vec<LayerSpec> = hidden
            .iter()
            .map(|&w| LayerSpec::new(w, Activation::Relu).with_dropout(dropout))
            .collect();
        specs.push(LayerSpec::new(output, output_activation));
        Self::new(input, &specs, rng)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let model = Self { layers, version: 0 };
        model.validate()?;
        Ok(model)
    }

    /// Check layer shape compatibility and parameter sanity.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("a model needs at least one layer"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.output_width() {
                return Err(Error::dim(format!(
                    "layer {i}: bias has {} entries for {} outputs",
                    layer.bias.len(),
                    layer.output_width()
                )));
            }
            if !(0.0..1.0).contains(&layer.dropout) {
                return Err(Error::config(format!("layer {i}: dropout outside [0, 1)")));
            }
            if i > 0 && self.layers[i - 1].output_width() != layer.input_width() {
                return Err(Error::dim(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    layer.input_width(),
                    i - 1,
                    self.layers[i - 1].output_width()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Direct parameter access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for layer in &mut self.layers {
            layer.trainable = trainable;
        }
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub(crate) fn layers_for_update(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Run the network. Dropout is only applied when `train` is set.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Matrix,
        train: bool,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardCache)> {
        if batch.cols() != self.input_width() {
            return Err(Error::dim(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_width()
            )));
        }
        let n = self.layers.len();
        let mut cache = ForwardCache {
            version: self.version,
            inputs: Vec::with_capacity(n),
            pre_activations: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            add_bias(&mut z, &layer.bias);
            let mut out = activate(&z, layer.activation);
            let mask = if train && layer.dropout > 0.0 {
                let keep = 1.0 - layer.dropout;
                let mask: Vec<f64> = (0..out.data().len())
                    .map(|_| {
                        if rng.gen::<f64>() < layer.dropout {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Some(mask)
            } else {
                None
            };
            cache.inputs.push(current);
            cache.pre_activations.push(z);
            cache.masks.push(mask);
            current = out;
        }
        if !current.is_finite() {
            return Err(Error::numeric("non-finite model output"));
        }
        Ok((current, cache))
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_width() {
            return Err(Error::dim(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_width()
            )));
        }
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            add_bias(&mut z, &layer.bias);
            current = activate(&z, layer.activation);
        }
        if !current.is_finite() {
            return Err(Error::numeric("non-finite model output"));
        }
        Ok(current)
    }

    /// Inference output with the softmax applied when the last layer is a softmax layer.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        let out = self.predict(batch)?;
        match self.layers[self.layers.len() - 1].activation {
            Activation::Softmax => Ok(softmax(&out)),
            _ => Ok(out),
        }
    }

    /// Backpropagate `loss_grad` (gradient of the loss w.r.t. the forward output).
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Matrix) -> Result<Gradients> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::State(
                "forward cache does not belong to the current model parameters".into(),
            ));
        }
        let last = &cache.pre_activations[self.layers.len() - 1];
        if loss_grad.shape() != last.shape() {
            return Err(Error::dim(format!(
                "loss gradient {:?} does not match output {:?}",
                loss_grad.shape(),
                last.shape()
            )));
        }
        let n = self.layers.len();
        let mut weights = vec![Matrix::zeros(0, 0); n];
        let mut biases = vec![Vec::new(); n];
        let mut upstream = loss_grad.clone();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if let Some(mask) = &cache.masks[i] {
                for (g, m) in upstream.data_mut().iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            if layer.activation == Activation::Relu {
                for (g, z) in upstream
                    .data_mut()
                    .iter_mut()
                    .zip(cache.pre_activations[i].data())
                {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            if layer.trainable {
                weights[i] = cache.inputs[i].t_matmul(&upstream)?;
                let mut db = vec![0.0; layer.output_width()];
                for row in upstream.iter_rows() {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                biases[i] = db;
            } else {
                weights[i] = Matrix::zeros(layer.input_width(), layer.output_width());
                biases[i] = vec![0.0; layer.output_width()];
            }
            upstream = upstream.matmul_t(&layer.weight)?;
        }
        Ok(Gradients {
            weights,
            biases,
            input: upstream,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MlpModel =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

fn add_bias(z: &mut Matrix, bias: &[f64]) {
    let cols = z.cols();
    if cols == 0 {
        return;
    }
    for row in z.data_mut().chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn activate(z: &Matrix, activation: Activation) -> Matrix {
    match activation {
        Activation::Relu => z.map(|v| v.max(0.0)),
        Activation::Linear | Activation::Softmax => z.clone(),
    }
}
