//! Minimal dense-network kernel: parameter tensors with gradient buffers,
//! ReLU MLPs with explicit forward tapes and hand-written backward passes,
//! softmax cross-entropy, sinusoidal time embeddings, and inverted dropout.
//!
//! Everything is `f64`. Forward passes are pure functions of (parameters,
//! input); gradient accumulation mutates the `grad` buffers in place and is
//! serialized by `&mut self`. Both a single-sample path and a row-batched
//! path are provided; the batched path exists purely for throughput and is
//! checked against the single-sample path in tests.

use ndarray::{Array, Array1, Array2, ArrayView1, ArrayView2, Axis, Dimension, Ix1, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parameter array paired with a same-shape gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor<D: Dimension> {
    pub values: Array<f64, D>,
    pub grad: Array<f64, D>,
}

pub type ParamMat = ParamTensor<Ix2>;
pub type ParamVec = ParamTensor<Ix1>;

impl<D: Dimension> ParamTensor<D> {
    pub fn new(values: Array<f64, D>) -> Self {
        let grad = Array::zeros(values.raw_dim());
        ParamTensor { values, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

/// Shape of an MLP: input width, hidden widths (ReLU), linear output width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec { input_dim, hidden, output_dim, activation: Activation::Relu }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("mlp dimensions must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("mlp hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Layer shapes as (out, in) pairs, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    /// Total parameter count: sum over layers of out*(in+1).
    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(o, i)| o * (i + 1)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: ParamMat, // (out, in)
    pub b: ParamVec, // (out,)
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<DenseLayer>,
}

/// Activations recorded during a single-sample forward pass.
/// `acts[0]` is the input; `acts[l+1]` is the output of layer `l`
/// (post-ReLU and post-dropout for hidden layers, linear for the last).
pub struct Tape {
    acts: Vec<Array1<f64>>,
    dropout: Option<Vec<Array1<f64>>>,
}

/// Row-batched analogue of [`Tape`]; each row is one sample.
pub struct BatchTape {
    acts: Vec<Array2<f64>>,
    dropout: Option<Vec<Array2<f64>>>,
}

impl Mlp {
    /// He-uniform weights (`|w| < sqrt(6 / fan_in)`), zero biases.
    pub fn init(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let limit = (6.0 / inp as f64).sqrt();
                let w = Array2::from_shape_fn((out, inp), |_| rng.random_range(-limit..limit));
                DenseLayer {
                    w: ParamTensor::new(w),
                    b: ParamTensor::new(Array1::zeros(out)),
                }
            })
            .collect();
        Ok(Mlp { spec, layers })
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.w.zero_grad();
            layer.b.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Mutable (values, grad) slice pairs in a fixed order (layer-major,
    /// weights before bias). The optimizer keys its moment buffers to this
    /// order, so it must never change.
    pub fn param_slices(&mut self) -> Vec<(&mut [f64], &mut [f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push((
                layer.w.values.as_slice_mut().expect("weights are standard layout"),
                layer.w.grad.as_slice_mut().expect("grads are standard layout"),
            ));
            out.push((
                layer.b.values.as_slice_mut().expect("bias is standard layout"),
                layer.b.grad.as_slice_mut().expect("grads are standard layout"),
            ));
        }
        out
    }

    /// All parameters flattened in `param_slices` order (for checkpoints).
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.w.values.iter());
            out.extend(layer.b.values.iter());
        }
        out
    }

    /// Inverse of [`Mlp::flat_values`].
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Data(format!(
                "parameter blob has {} values, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for v in layer.w.values.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
            for v in layer.b.values.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.spec.input_dim {
            return Err(Error::Config(format!(
                "input has dimension {len}, mlp expects {}",
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass recording a tape for backprop.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Tape)> {
        self.forward_dropout(x, None)
    }

    /// Forward pass with optional inverted dropout on hidden activations
    /// (training-time regularization only; `rate == 0` is a no-op).
    pub fn forward_dropout(
        &self,
        x: ArrayView1<f64>,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(Array1<f64>, Tape)> {
        self.check_input(x.len())?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = dropout.as_ref().map(|_| Vec::with_capacity(last));
        acts.push(x.to_owned());
        let mut dropout = dropout;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.values.dot(acts.last().unwrap());
            z += &layer.b.values;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
                if let Some((rate, rng)) = dropout.as_mut() {
                    let mask = dropout_mask(z.len(), *rate, rng)?;
                    z *= &mask;
                    masks.as_mut().unwrap().push(mask);
                }
            }
            acts.push(z);
        }
        let out = acts.last().unwrap().clone();
        Ok((out, Tape { acts, dropout: masks }))
    }

    /// Forward pass without a tape, many samples at once (rows of `x`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w.values.t());
            z += &layer.b.values;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched forward with tape (rows are samples).
    pub fn forward_batch_tape(
        &self,
        x: ArrayView2<f64>,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(Array2<f64>, BatchTape)> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = dropout.as_ref().map(|_| Vec::with_capacity(last));
        acts.push(x.to_owned());
        let mut dropout = dropout;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts.last().unwrap().dot(&layer.w.values.t());
            z += &layer.b.values;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
                if let Some((rate, rng)) = dropout.as_mut() {
                    let mask = dropout_mask_batch(z.nrows(), z.ncols(), *rate, rng)?;
                    z *= &mask;
                    masks.as_mut().unwrap().push(mask);
                }
            }
            acts.push(z);
        }
        let out = acts.last().unwrap().clone();
        Ok((out, BatchTape { acts, dropout: masks }))
    }

    /// Backpropagate `upstream` (dL/d output) through the tape, accumulating
    /// into the parameter `grad` buffers (`+=` semantics) and returning
    /// dL/d input. ReLU uses subgradient 0 at exactly 0.
    pub fn backward(&mut self, tape: &Tape, upstream: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(upstream.len(), self.spec.output_dim, "upstream shape mismatch");
        assert_eq!(tape.acts.len(), self.layers.len() + 1, "tape does not match model");
        let last = self.layers.len() - 1;
        let mut g = upstream.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                // Gate by the recorded post-activation: zero wherever ReLU
                // (or dropout) zeroed the unit, and re-apply the dropout
                // scale where it survived.
                let act = &tape.acts[l + 1];
                match tape.dropout.as_ref() {
                    Some(masks) => {
                        let m = &masks[l];
                        for i in 0..g.len() {
                            g[i] = if act[i] > 0.0 { g[i] * m[i] } else { 0.0 };
                        }
                    }
                    None => {
                        for i in 0..g.len() {
                            if act[i] <= 0.0 {
                                g[i] = 0.0;
                            }
                        }
                    }
                }
            }
            let layer = &mut self.layers[l];
            let a_prev = &tape.acts[l];
            let mut gin = Array1::zeros(a_prev.len());
            for o in 0..g.len() {
                let go = g[o];
                if go != 0.0 {
                    layer.w.grad.row_mut(o).scaled_add(go, a_prev);
                    gin.scaled_add(go, &layer.w.values.row(o));
                }
            }
            layer.b.grad += &g;
            g = gin;
        }
        g
    }

    /// Batched analogue of [`Mlp::backward`].
    pub fn backward_batch(&mut self, tape: &BatchTape, upstream: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(upstream.ncols(), self.spec.output_dim, "upstream shape mismatch");
        assert_eq!(tape.acts.len(), self.layers.len() + 1, "tape does not match model");
        let last = self.layers.len() - 1;
        let mut g = upstream.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                let act = &tape.acts[l + 1];
                match tape.dropout.as_ref() {
                    Some(masks) => {
                        let m = &masks[l];
                        ndarray::Zip::from(&mut g).and(act).and(m).for_each(|gi, &ai, &mi| {
                            *gi = if ai > 0.0 { *gi * mi } else { 0.0 };
                        });
                    }
                    None => {
                        ndarray::Zip::from(&mut g).and(act).for_each(|gi, &ai| {
                            if ai <= 0.0 {
                                *gi = 0.0;
                            }
                        });
                    }
                }
            }
            let layer = &mut self.layers[l];
            let a_prev = &tape.acts[l];
            layer.w.grad += &g.t().dot(a_prev);
            layer.b.grad += &g.sum_axis(Axis(0));
            g = g.dot(&layer.w.values);
        }
        g
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum: f64 = out.sum();
    out /= sum;
    out
}

/// Cross-entropy of a single sample: returns (loss, dL/d logits).
pub fn softmax_cross_entropy(logits: ArrayView1<f64>, label: usize) -> Result<(f64, Array1<f64>)> {
    if label >= logits.len() {
        return Err(Error::Data(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted = logits.mapv(|v| v - max);
    let log_sum = shifted.mapv(f64::exp).sum().ln();
    let loss = log_sum - shifted[label];
    let mut grad = shifted.mapv(|v| (v - log_sum).exp());
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Fixed sinusoidal position code for a timestep: entry `2i` is
/// `sin(t / 10000^(2i/dim))`, entry `2i+1` the matching cosine.
pub fn sinusoidal_time_embedding(t: f64, horizon: usize, dim: usize) -> Result<Array1<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("time embedding dimension {dim} must be even and positive")));
    }
    if !(0.0..=horizon as f64).contains(&t) {
        return Err(Error::Config(format!("time {t} outside [0, {horizon}]")));
    }
    let mut out = Array1::zeros(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(-((2 * i) as f64) / dim as f64);
        out[2 * i] = (t * freq).sin();
        out[2 * i + 1] = (t * freq).cos();
    }
    Ok(out)
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else
/// `1/(1-rate)`, so the expected value of a masked activation is unchanged.
pub fn dropout_mask(dim: usize, rate: f64, rng: &mut ChaCha8Rng) -> Result<Array1<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Array1::from_shape_fn(dim, |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

fn dropout_mask_batch(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

/// Compare an analytic gradient against central finite differences of `f`,
/// returning the worst relative error over all coordinates. The relative
/// error uses `max(|analytic|, |numeric|, 1e-6)` as denominator so that
/// near-zero gradients are compared absolutely.
pub fn finite_difference_check<F>(mut f: F, params: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let hi = f(&work);
        work[i] = orig - eps;
        let lo = f(&work);
        work[i] = orig;
        let numeric = (hi - lo) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
pub(crate) fn assert_close(a: f64, b: f64, tol: f64) {
    assert!(
        (a - b).abs() <= tol,
        "expected {a} ≈ {b} within {tol} (diff {})",
        (a - b).abs()
    );
}
