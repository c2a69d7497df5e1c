use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer `y = x W + b`, with `W` stored input-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Rectifier MLP with an identity output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

/// Activations retained by a forward pass for backpropagation.
pub struct Trace {
    /// `inputs[l]` is the input to layer `l`; `inputs[0]` is the batch.
    inputs: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

/// Parameter gradients, one `(dW, db)` per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.scaled_add(scale, ow);
            b.scaled_add(scale, ob);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            *w *= s;
            *b *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }

    /// Flattened view, layer by layer, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

impl MlpModel {
    /// Zero-initialized model with the given layer widths
    /// `[input, hidden.., output]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Argument(format!("invalid layer dims {dims:?}")));
        }
        Ok(MlpModel {
            layers: dims
                .windows(2)
                .map(|w| Dense {
                    weight: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        })
    }

    /// Gaussian weights with std `√(2 / fan_in)` and zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        for layer in &mut model.layers {
            let fan_in = layer.weight.nrows() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            layer.weight.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("model needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weight.ncols() != l.bias.len() {
                return Err(Error::Dimension(format!("layer {k}: weight/bias widths differ")));
            }
            if k > 0 && layers[k - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::Dimension(format!("layer {k} does not chain")));
            }
        }
        Ok(MlpModel { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.ncols()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, batch has {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.weight) + &layer.bias;
            if k < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, batch has {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight) + &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(a);
            a = z;
        }
        Ok(Trace { inputs, logits: a })
    }

    /// Backpropagates `∂L/∂logits` through a trace. Returns parameter
    /// gradients and `∂L/∂x`.
    pub fn backward(&self, trace: &Trace, grad_logits: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if grad_logits.dim() != trace.logits.dim() {
            return Err(Error::Dimension("gradient shape differs from logits".into()));
        }
        let mut g = grad_logits.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[k];
            let dw = input.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            let mut prev = g.dot(&layer.weight.t());
            if k > 0 {
                prev.zip_mut_with(input, |p, &a| {
                    if a <= 0.0 {
                        *p = 0.0
                    }
                });
            }
            grads.push((dw, db));
            g = prev;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// `self ← self + scale · delta`, layer by layer.
    pub fn apply(&mut self, delta: &Gradients, scale: f64) {
        for (layer, (dw, db)) in self.layers.iter_mut().zip(&delta.layers) {
            layer.weight.scaled_add(scale, dw);
            layer.bias.scaled_add(scale, db);
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self
            .forward(x)?
            .rows()
            .into_iter()
            .map(|row| argmax(row.iter().copied()))
            .collect())
    }
}

pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Persisted form of a model plus what is needed to feed it raw inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub activation: String,
    /// Per layer, row-major `[input][output]` weights flattened.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Masking baseline in model input space (training-split means).
    pub baseline: Vec<f64>,
    /// Standardization applied to raw features before the model.
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub class_names: Vec<String>,
    pub dataset_digest: String,
    pub train_config_digest: String,
    #[serde(default)]
    pub train_config: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn from_model(model: &MlpModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: model.layer_dims(),
            activation: "relu".into(),
            weights: model
                .layers
                .iter()
                .map(|l| l.weight.iter().copied().collect())
                .collect(),
            biases: model.layers.iter().map(|l| l.bias.to_vec()).collect(),
            baseline: vec![0.0; model.input_dim()],
            input_mean: vec![0.0; model.input_dim()],
            input_std: vec![1.0; model.input_dim()],
            class_names: (0..model.output_dim()).map(|c| c.to_string()).collect(),
            dataset_digest: String::new(),
            train_config_digest: String::new(),
            train_config: None,
        }
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.activation != "relu" {
            return Err(Error::Schema(format!("unsupported activation {}", self.activation)));
        }
        let dims = &self.layer_dims;
        if dims.len() < 2 || self.weights.len() != dims.len() - 1 || self.biases.len() != dims.len() - 1 {
            return Err(Error::Schema("layer arrays do not match layer_dims".into()));
        }
        let layers = dims
            .windows(2)
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(w, (weights, bias))| {
                let weight = Array2::from_shape_vec((w[0], w[1]), weights.clone())
                    .map_err(|e| Error::Schema(format!("weight shape: {e}")))?;
                if bias.len() != w[1] {
                    return Err(Error::Schema("bias length".into()));
                }
                Ok(Dense {
                    weight,
                    bias: Array1::from(bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpModel::from_layers(layers)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Maps a raw feature row into model input space.
    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    // straightforward per-sample evaluation with explicit loops
    fn oracle_forward(model: &MlpModel, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = model.layers().len() - 1;
        for (k, l) in model.layers().iter().enumerate() {
            let mut z = vec![0.0; l.weight.ncols()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut s = l.bias[o];
                for (i, ai) in a.iter().enumerate() {
                    s += ai * l.weight[[i, o]];
                }
                *zo = if k < last { s.max(0.0) } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut m = MlpModel::zeros(&[3, 4, 2]).unwrap();
        m.layers_mut()[1].bias = array![0.5, -1.0];
        let out = m.forward(array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]].view()).unwrap();
        assert_eq!(out, array![[0.5, -1.0], [0.5, -1.0]]);
    }

    #[test]
    fn single_layer_is_affine() {
        let w = array![[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]];
        let b = array![0.1, 0.2];
        let m = MlpModel::from_layers(vec![Dense { weight: w, bias: b }]).unwrap();
        let out = m.forward(array![[1.0, 2.0, -1.0]].view()).unwrap();
        assert!((out[[0, 0]] - (1.0 + 1.0 + 0.0 + 0.1)).abs() < 1e-15);
        assert!((out[[0, 1]] - (2.0 - 2.0 - 3.0 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut r = rng::stream(4, &[]);
        let m = MlpModel::init(&[7, 16, 9, 3], &mut r).unwrap();
        let x = Array2::from_shape_fn((11, 7), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
        let out = m.forward(x.view()).unwrap();
        for (row, o) in x.rows().into_iter().zip(out.rows()) {
            let expect = oracle_forward(&m, row.as_slice().unwrap());
            for (a, b) in o.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(m.forward(Array2::zeros((2, 6)).view()).is_err());
    }

    #[test]
    fn rows_do_not_depend_on_batch_composition() {
        let mut r = rng::stream(5, &[]);
        let m = MlpModel::init(&[12, 100, 100, 2], &mut r).unwrap();
        let x = Array2::from_shape_fn((37, 12), |(i, j)| ((i * 13 + j) as f64 * 0.11).cos());
        let all = m.forward(x.view()).unwrap();
        for i in [0, 5, 36] {
            let one = m.forward(x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            assert_eq!(one.row(0), all.row(i));
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut r = rng::stream(6, &[]);
        let m = MlpModel::init(&[5, 8, 3], &mut r).unwrap();
        let text = ModelFile::from_model(&m).to_json().unwrap();
        let back = ModelFile::from_json(&text).unwrap().to_model().unwrap();
        assert_eq!(back, m);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - j as f64) / 3.0);
        assert_eq!(m.forward(x.view()).unwrap(), back.forward(x.view()).unwrap());
    }

    #[test]
    fn wrong_format_version_rejected() {
        let m = MlpModel::zeros(&[2, 2]).unwrap();
        let mut f = ModelFile::from_model(&m);
        f.format_version = 99;
        assert!(matches!(f.to_model(), Err(Error::Schema(_))));
    }
}
