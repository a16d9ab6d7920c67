use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};

/// Multi-layer perceptron: `relu(W x + b)` on hidden layers, `W x + b` on the last.
///
/// Weight matrices are stored `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Gradients with the same layout as the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer activations of a batched forward pass, kept for backpropagation.
///
/// `activations[0]` is the input; `activations[i + 1]` is the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(invalid("an mlp needs at least an input and an output dimension"));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(invalid(format!("layer dimensions must be positive, got {layer_dims:?}")));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        check_dims(layer_dims)?;
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bound");
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng)));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { weights, biases })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|p| Array2::zeros((p[1], p[0]))).collect();
        let biases = layer_dims[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self { weights, biases })
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(mismatch(format!(
                "{} weight matrices and {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != b.len() || w.nrows() == 0 || w.ncols() == 0 {
                return Err(mismatch(format!(
                    "layer {i}: weight {:?} vs bias {}",
                    w.dim(),
                    b.len()
                )));
            }
            if i > 0 && weights[i - 1].nrows() != w.ncols() {
                return Err(mismatch(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    w.ncols(),
                    i - 1,
                    weights[i - 1].nrows()
                )));
            }
        }
        Ok(Self { weights, biases })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.weights.iter().map(|w| w.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map(|w| w.nrows()).unwrap_or(0)
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(mismatch(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        Ok(self.forward_batch_unchecked(x).into_raw_vec_and_offset().0)
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(mismatch(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        Ok(self.forward_batch_unchecked(input))
    }

    fn forward_batch_unchecked(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut act = self.affine(0, input);
        self.finish_from(1, &mut act);
        act
    }

    fn affine(&self, layer: usize, input: ArrayView2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights[layer].t());
        z += &self.biases[layer];
        z
    }

    /// Continues a forward pass from the pre-activation of the first layer.
    ///
    /// Lets callers assemble the first affine map from precomputed pieces
    /// (for example a fixed condition block) and reuse the rest of the network.
    pub fn forward_from_first_preactivation(&self, mut pre: Array2<f64>) -> Result<Array2<f64>> {
        if pre.ncols() != self.weights[0].nrows() {
            return Err(mismatch(format!(
                "first-layer pre-activation has {} columns, expected {}",
                pre.ncols(),
                self.weights[0].nrows()
            )));
        }
        self.finish_from(1, &mut pre);
        Ok(pre)
    }

    // `act` holds the pre-activation of layer `start - 1`.
    fn finish_from(&self, start: usize, act: &mut Array2<f64>) {
        for layer in start..self.weights.len() {
            act.mapv_inplace(relu);
            *act = self.affine(layer, act.view());
        }
    }

    /// Batched forward pass retaining every layer output.
    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(mismatch(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(input.to_owned());
        for layer in 0..self.weights.len() {
            let mut z = self.affine(layer, activations[layer].view());
            if layer < last {
                z.mapv_inplace(relu);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Backpropagates `output_grad` (d loss / d output, one row per sample).
    ///
    /// Returns parameter gradients summed over the batch and the gradient with
    /// respect to the input rows.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        let batch = cache.activations[0].nrows();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(mismatch(format!(
                "output gradient {:?} vs expected ({batch}, {})",
                output_grad.dim(),
                self.output_dim()
            )));
        }
        let n = self.weights.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = output_grad.to_owned();
        for layer in (0..n).rev() {
            let input = &cache.activations[layer];
            gw.push(delta.t().dot(input));
            gb.push(delta.sum_axis(Axis(0)));
            let mut upstream = delta.dot(&self.weights[layer]);
            if layer > 0 {
                // ReLU derivative from the stored post-activation.
                Zip::from(&mut upstream).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = upstream;
        }
        gw.reverse();
        gb.reverse();
        Ok((MlpGrads { weights: gw, biases: gb }, delta))
    }

    /// Single-vector backward pass.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if output_grad.len() != self.output_dim() {
            return Err(mismatch(format!(
                "output gradient has length {}, network outputs {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if input.len() != self.input_dim() {
            return Err(mismatch(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        let cache = self.forward_cached(x)?;
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("contiguous");
        let (grads, input_grad) = self.backward_batch(&cache, g)?;
        Ok((grads, input_grad.into_raw_vec_and_offset().0))
    }

    /// Soft-thresholds the first-layer weights toward zero by `threshold`,
    /// the proximal step of an L1 penalty on the input connections.
    pub fn shrink_input_weights(&mut self, threshold: f64) {
        if threshold > 0.0 {
            self.weights[0].mapv_inplace(|w| w.signum() * (w.abs() - threshold).max(0.0));
        }
    }

    /// Exponential moving average: `self = decay * self + (1 - decay) * other`.
    pub fn ema_update(&mut self, other: &Mlp, decay: f64) -> Result<()> {
        if self.layer_dims() != other.layer_dims() {
            return Err(mismatch("moving-average target has a different architecture"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            Zip::from(a).and(b).for_each(|x, &y| *x = decay * *x + (1.0 - decay) * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            Zip::from(a).and(b).for_each(|x, &y| *x = decay * *x + (1.0 - decay) * y);
        }
        Ok(())
    }

    /// Pre-activation contribution of a block of input columns to the first layer.
    ///
    /// Returns `W[:, cols] · v` for a single vector `v` placed at `cols.start`.
    pub fn first_layer_partial(&self, start: usize, v: ArrayView1<f64>) -> Array1<f64> {
        self.weights[0].slice(s![.., start..start + v.len()]).dot(&v)
    }
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}
