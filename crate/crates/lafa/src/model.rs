//! The three learned components and their (de)serialization.
//!
//! * [`ContextSelector`] — one logit per static context feature; gating the
//!   logits yields the context mask `m_s`.
//! * [`Planner`] — maps (masked history, decision time, masked context) to a
//!   full `T x d` grid of acquisition logits. The decision time enters as a
//!   sinusoidal embedding.
//! * [`Predictor`] — classifies the label at a target timestep from (masked
//!   history, masked context, normalized target time).
//!
//! Masked history is always the full `T x d` grid with unacquired cells set
//! to zero, flattened row-major (timestep-major) before entering an MLP.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::gating::{gate_vector, GateMode, GateSample};
use crate::nn::{sinusoidal_time_embedding, softmax, Mlp, MlpSpec, ParamTensor, ParamVec, Tape};
use crate::rng::{stream, stream_rng};
use crate::train::TrainConfig;

/// Width of the planner's sinusoidal time embedding.
pub const TIME_EMBED_DIM: usize = 64;
/// Hidden widths of the planner MLP.
pub const PLANNER_HIDDEN: [usize; 3] = [512, 256, 128];
/// Hidden widths of the predictor MLP.
pub const PREDICTOR_HIDDEN: [usize; 3] = [64, 64, 64];

/// Problem dimensions shared by all components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_s: usize,
    pub d: usize,
    pub horizon: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn from_manifest(manifest: &DatasetManifest) -> Self {
        ModelDims {
            d_s: manifest.d_s,
            d: manifest.d,
            horizon: manifest.horizon,
            classes: manifest.classes,
        }
    }

    pub fn history_len(&self) -> usize {
        self.horizon * self.d
    }
}

/// Per-feature acquisition logits over the static context.
#[derive(Debug, Clone)]
pub struct ContextSelector {
    pub alpha: ParamVec,
}

impl ContextSelector {
    /// Zero-initialized logits: gates are unbiased under noise.
    pub fn new(d_s: usize) -> Self {
        ContextSelector { alpha: ParamTensor::new(Array1::zeros(d_s)) }
    }

    /// Gate the context logits into a mask sample.
    pub fn mask(
        &self,
        mode: GateMode,
        tau: f64,
        rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Result<Vec<GateSample>> {
        gate_vector(self.alpha.values.view(), mode, tau, rng)
    }
}

#[derive(Debug, Clone)]
pub struct Planner {
    pub mlp: Mlp,
    pub dims: ModelDims,
    pub time_dim: usize,
}

impl Planner {
    pub fn new(dims: ModelDims, hidden: Vec<usize>, time_dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        if time_dim == 0 || time_dim % 2 != 0 {
            return Err(Error::Config(format!("planner time embedding width {time_dim} must be even and positive")));
        }
        let input_dim = dims.history_len() + time_dim + dims.d_s;
        let spec = MlpSpec::new(input_dim, hidden, dims.history_len());
        Ok(Planner { mlp: Mlp::init(spec, rng)?, dims, time_dim })
    }

    pub fn standard(dims: ModelDims, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        Planner::new(dims, PLANNER_HIDDEN.to_vec(), TIME_EMBED_DIM, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.spec.input_dim
    }

    /// Offset of the masked-context block inside the planner input.
    pub fn context_offset(&self) -> usize {
        self.dims.history_len() + self.time_dim
    }

    /// Assemble the planner input: flattened masked history, time embedding
    /// of the decision time `t` (0 = before any acquisition), masked context.
    pub fn build_input(
        &self,
        masked_history: ArrayView2<f64>,
        t: usize,
        masked_context: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        if masked_history.nrows() != self.dims.horizon || masked_history.ncols() != self.dims.d {
            return Err(Error::Config(format!(
                "planner history is {}x{}, expected {}x{}",
                masked_history.nrows(),
                masked_history.ncols(),
                self.dims.horizon,
                self.dims.d
            )));
        }
        if masked_context.len() != self.dims.d_s {
            return Err(Error::Config(format!(
                "planner context has {} entries, expected {}",
                masked_context.len(),
                self.dims.d_s
            )));
        }
        if t > self.dims.horizon {
            return Err(Error::Config(format!("decision time {t} outside 0..={}", self.dims.horizon)));
        }
        let emb = sinusoidal_time_embedding(t as f64, self.dims.horizon, self.time_dim)?;
        let mut input = Array1::zeros(self.input_dim());
        for (i, &v) in masked_history.iter().enumerate() {
            input[i] = v; // row-major: cell (t', j) lands at t'*d + j
        }
        let base = self.dims.history_len();
        input.slice_mut(ndarray::s![base..base + self.time_dim]).assign(&emb);
        let base = self.context_offset();
        input.slice_mut(ndarray::s![base..base + self.dims.d_s]).assign(&masked_context);
        Ok(input)
    }

    /// Acquisition logits as a `T x d` grid (pure forward).
    pub fn logits(
        &self,
        masked_history: ArrayView2<f64>,
        t: usize,
        masked_context: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        let input = self.build_input(masked_history, t, masked_context)?;
        let (flat, _) = self.mlp.forward(input.view())?;
        Ok(flat
            .into_shape_with_order((self.dims.horizon, self.dims.d))
            .expect("planner output reshapes to T x d"))
    }

    /// Forward pass keeping the tape for backprop; logits stay flat
    /// (cell (t', j) at index t'*d + j).
    pub fn logits_tape(
        &self,
        masked_history: ArrayView2<f64>,
        t: usize,
        masked_context: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Tape)> {
        let input = self.build_input(masked_history, t, masked_context)?;
        self.mlp.forward(input.view())
    }
}

#[derive(Debug, Clone)]
pub struct Predictor {
    pub mlp: Mlp,
    pub dims: ModelDims,
}

impl Predictor {
    pub fn new(dims: ModelDims, hidden: Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        let input_dim = dims.history_len() + dims.d_s + 1;
        let spec = MlpSpec::new(input_dim, hidden, dims.classes);
        Ok(Predictor { mlp: Mlp::init(spec, rng)?, dims })
    }

    pub fn standard(dims: ModelDims, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        Predictor::new(dims, PREDICTOR_HIDDEN.to_vec(), rng)
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.spec.input_dim
    }

    pub fn context_offset(&self) -> usize {
        self.dims.history_len()
    }

    /// Assemble the predictor input: flattened masked history, masked
    /// context, normalized target time `t'/T` with `1 <= t' <= T`.
    pub fn build_input(
        &self,
        masked_history: ArrayView2<f64>,
        masked_context: ArrayView1<f64>,
        t_target: usize,
    ) -> Result<Array1<f64>> {
        if masked_history.nrows() != self.dims.horizon || masked_history.ncols() != self.dims.d {
            return Err(Error::Config(format!(
                "predictor history is {}x{}, expected {}x{}",
                masked_history.nrows(),
                masked_history.ncols(),
                self.dims.horizon,
                self.dims.d
            )));
        }
        if masked_context.len() != self.dims.d_s {
            return Err(Error::Config(format!(
                "predictor context has {} entries, expected {}",
                masked_context.len(),
                self.dims.d_s
            )));
        }
        if t_target == 0 || t_target > self.dims.horizon {
            return Err(Error::Config(format!(
                "prediction target time {t_target} outside 1..={}",
                self.dims.horizon
            )));
        }
        let mut input = Array1::zeros(self.input_dim());
        for (i, &v) in masked_history.iter().enumerate() {
            input[i] = v;
        }
        let base = self.context_offset();
        input.slice_mut(ndarray::s![base..base + self.dims.d_s]).assign(&masked_context);
        input[self.input_dim() - 1] = t_target as f64 / self.dims.horizon as f64;
        Ok(input)
    }

    /// Class probabilities for the label at `t_target`.
    pub fn predict(
        &self,
        masked_history: ArrayView2<f64>,
        masked_context: ArrayView1<f64>,
        t_target: usize,
    ) -> Result<Array1<f64>> {
        let input = self.build_input(masked_history, masked_context, t_target)?;
        let (logits, _) = self.mlp.forward(input.view())?;
        Ok(softmax(logits.view()))
    }
}

/// The jointly trained triple.
#[derive(Debug, Clone)]
pub struct Models {
    pub selector: ContextSelector,
    pub planner: Planner,
    pub predictor: Predictor,
}

impl Models {
    pub fn zero_grad(&mut self) {
        self.selector.alpha.zero_grad();
        self.planner.mlp.zero_grad();
        self.predictor.mlp.zero_grad();
    }

    pub fn all_finite(&self) -> bool {
        self.selector.alpha.all_finite()
            && self.planner.mlp.layers.iter().all(|l| l.w.all_finite() && l.b.all_finite())
            && self.predictor.mlp.layers.iter().all(|l| l.w.all_finite() && l.b.all_finite())
    }

    /// Multiply every accumulated gradient by `factor` (used to turn
    /// per-state gradient sums into the mean over a state buffer).
    pub fn scale_grad(&mut self, factor: f64) {
        self.selector.alpha.grad.mapv_inplace(|g| g * factor);
        for mlp in [&mut self.planner.mlp, &mut self.predictor.mlp] {
            for layer in &mut mlp.layers {
                layer.w.grad.mapv_inplace(|g| g * factor);
                layer.b.grad.mapv_inplace(|g| g * factor);
            }
        }
    }
}

/// Fresh models with the standard architecture: zero context logits,
/// He-uniform MLP weights, zero biases. Initialization consumes independent
/// streams per component, so adding a component never shifts another's init.
pub fn init_models(dims: ModelDims, seed: u64) -> Result<Models> {
    let mut planner_rng = stream_rng(seed, &[stream::WEIGHT_INIT, 0]);
    let mut predictor_rng = stream_rng(seed, &[stream::WEIGHT_INIT, 1]);
    Ok(Models {
        selector: ContextSelector::new(dims.d_s),
        planner: Planner::standard(dims, &mut planner_rng)?,
        predictor: Predictor::standard(dims, &mut predictor_rng)?,
    })
}

/// Self-describing checkpoint: dataset manifest (with any fitted feature
/// transform), component shapes, flat parameters, gate temperature, and the
/// training configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub manifest: DatasetManifest,
    pub dims: ModelDims,
    pub time_dim: usize,
    pub alpha: Vec<f64>,
    pub planner_spec: MlpSpec,
    pub planner_params: Vec<f64>,
    pub predictor_spec: MlpSpec,
    pub predictor_params: Vec<f64>,
    pub tau: f64,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn from_models(
        models: &Models,
        manifest: &DatasetManifest,
        tau: f64,
        config: &TrainConfig,
    ) -> Self {
        Checkpoint {
            manifest: manifest.clone(),
            dims: models.planner.dims,
            time_dim: models.planner.time_dim,
            alpha: models.selector.alpha.values.to_vec(),
            planner_spec: models.planner.mlp.spec.clone(),
            planner_params: models.planner.mlp.flat_values(),
            predictor_spec: models.predictor.mlp.spec.clone(),
            predictor_params: models.predictor.mlp.flat_values(),
            tau,
            config: config.clone(),
        }
    }

    pub fn into_models(self) -> Result<(Models, DatasetManifest, f64, TrainConfig)> {
        let dims = self.dims;
        if dims != ModelDims::from_manifest(&self.manifest) {
            return Err(Error::Data("checkpoint: dims disagree with embedded manifest".into()));
        }
        if self.alpha.len() != dims.d_s {
            return Err(Error::Data(format!(
                "checkpoint: alpha has {} logits, manifest says d_s = {}",
                self.alpha.len(),
                dims.d_s
            )));
        }
        let expected_planner_in = dims.history_len() + self.time_dim + dims.d_s;
        if self.planner_spec.input_dim != expected_planner_in
            || self.planner_spec.output_dim != dims.history_len()
        {
            return Err(Error::Data("checkpoint: planner shape disagrees with manifest dims".into()));
        }
        if self.predictor_spec.input_dim != dims.history_len() + dims.d_s + 1
            || self.predictor_spec.output_dim != dims.classes
        {
            return Err(Error::Data("checkpoint: predictor shape disagrees with manifest dims".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Data(format!("checkpoint: temperature {} must be positive", self.tau)));
        }

        let mut seed_rng = stream_rng(0, &[stream::WEIGHT_INIT]);
        let mut planner = Planner {
            mlp: Mlp::init(self.planner_spec, &mut seed_rng)?,
            dims,
            time_dim: self.time_dim,
        };
        planner.mlp.load_flat(&self.planner_params)?;
        let mut predictor = Predictor { mlp: Mlp::init(self.predictor_spec, &mut seed_rng)?, dims };
        predictor.mlp.load_flat(&self.predictor_params)?;
        let mut selector = ContextSelector::new(dims.d_s);
        selector.alpha.values.assign(&Array1::from(self.alpha));

        let models = Models { selector, planner, predictor };
        if !models.all_finite() {
            return Err(Error::Data("checkpoint: parameters contain non-finite values".into()));
        }
        Ok((models, self.manifest, self.tau, self.config))
    }
}

pub fn save_checkpoint(
    path: &Path,
    models: &Models,
    manifest: &DatasetManifest,
    tau: f64,
    config: &TrainConfig,
) -> Result<()> {
    let ckpt = Checkpoint::from_models(models, manifest, tau, config);
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &ckpt)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Models, DatasetManifest, f64, TrainConfig)> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let ckpt: Checkpoint = serde_json::from_reader(file)?;
    ckpt.into_models()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gating::GateMode;

    fn dims() -> ModelDims {
        ModelDims { d_s: 6, d: 8, horizon: 10, classes: 2 }
    }

    fn small_dims() -> ModelDims {
        ModelDims { d_s: 3, d: 4, horizon: 5, classes: 3 }
    }

    #[test]
    fn standard_parameter_counts() {
        let models = init_models(dims(), 1).unwrap();
        // Planner: input 10*8 + 64 + 6 = 150, hidden [512, 256, 128], out 80.
        assert_eq!(models.planner.mlp.param_count(), 512 * 151 + 256 * 513 + 128 * 257 + 80 * 129);
        // Predictor: input 80 + 6 + 1 = 87, hidden [64, 64, 64], out 2.
        assert_eq!(models.predictor.mlp.param_count(), 64 * 88 + 64 * 65 + 64 * 65 + 2 * 65);
        assert_eq!(models.selector.alpha.len(), 6);
        assert!(models.selector.alpha.values.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_models(small_dims(), 77).unwrap();
        let b = init_models(small_dims(), 77).unwrap();
        let c = init_models(small_dims(), 78).unwrap();
        assert_eq!(a.planner.mlp.flat_values(), b.planner.mlp.flat_values());
        assert_eq!(a.predictor.mlp.flat_values(), b.predictor.mlp.flat_values());
        assert_ne!(a.planner.mlp.flat_values(), c.planner.mlp.flat_values());
    }

    #[test]
    fn zero_logits_gate_closed_in_deterministic_mode() {
        // sigma(0) = 0.5 is not strictly above threshold, so a fresh selector
        // deterministically acquires nothing.
        let models = init_models(small_dims(), 3).unwrap();
        let mask = models.selector.mask(GateMode::Deterministic, 1.0, None).unwrap();
        assert!(mask.iter().all(|s| s.hard == 0.0));
    }

    #[test]
    fn planner_grid_is_row_major_reshape() {
        let d = small_dims();
        let models = init_models(d, 5).unwrap();
        let hist = Array2::from_shape_fn((d.horizon, d.d), |(t, j)| (t * d.d + j) as f64 * 0.1);
        let ctx = Array1::from_shape_fn(d.d_s, |k| k as f64 * 0.2 - 0.1);
        let grid = models.planner.logits(hist.view(), 2, ctx.view()).unwrap();
        let (flat, _) = models
            .planner
            .logits_tape(hist.view(), 2, ctx.view())
            .unwrap();
        assert_eq!(grid.nrows(), d.horizon);
        assert_eq!(grid.ncols(), d.d);
        for t in 0..d.horizon {
            for j in 0..d.d {
                assert_eq!(grid[(t, j)], flat[t * d.d + j]);
            }
        }
    }

    #[test]
    fn planner_depends_only_on_masked_values() {
        // Zeroing a cell and then changing the underlying raw value must not
        // change the planner output, because the input is built from the
        // already-masked history.
        let d = small_dims();
        let models = init_models(d, 9).unwrap();
        let mask = Array2::from_shape_fn((d.horizon, d.d), |(t, j)| f64::from((t + j) % 2 == 0));
        let raw = Array2::from_shape_fn((d.horizon, d.d), |(t, j)| (t as f64 - j as f64) * 0.3);
        let ctx = Array1::zeros(d.d_s);

        let masked = &raw * &mask;
        let out1 = models.planner.logits(masked.view(), 1, ctx.view()).unwrap();
        let mut mutated = raw.clone();
        for ((t, j), m) in mask.indexed_iter() {
            if *m == 0.0 {
                mutated[(t, j)] = 1e6; // arbitrary garbage in unobserved cells
            }
        }
        let masked2 = &mutated * &mask;
        let out2 = models.planner.logits(masked2.view(), 1, ctx.view()).unwrap();
        assert_eq!(out1, out2);
    }

    #[test]
    fn predictor_probabilities_are_normalized() {
        let d = small_dims();
        let models = init_models(d, 13).unwrap();
        let hist = Array2::zeros((d.horizon, d.d));
        let ctx = Array1::zeros(d.d_s);
        for t in 1..=d.horizon {
            let p = models.predictor.predict(hist.view(), ctx.view(), t).unwrap();
            assert_eq!(p.len(), d.classes);
            assert!((p.sum() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn target_time_validation() {
        let d = small_dims();
        let models = init_models(d, 13).unwrap();
        let hist = Array2::zeros((d.horizon, d.d));
        let ctx = Array1::zeros(d.d_s);
        assert!(models.predictor.predict(hist.view(), ctx.view(), 0).is_err());
        assert!(models.predictor.predict(hist.view(), ctx.view(), d.horizon + 1).is_err());
        assert!(models.planner.logits(hist.view(), d.horizon + 1, ctx.view()).is_err());
        assert!(models.planner.logits(hist.view(), d.horizon, ctx.view()).is_ok());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let d = small_dims();
        let mut models = init_models(d, 21).unwrap();
        // Make alpha non-trivial so the round trip exercises it.
        models.selector.alpha.values.assign(&ndarray::array![0.3, -1.7, 0.0]);
        let manifest = DatasetManifest {
            d_s: d.d_s,
            d: d.d,
            horizon: d.horizon,
            classes: d.classes,
            context_costs: vec![1.0; d.d_s],
            temporal_costs: vec![0.5; d.d],
            context_names: (0..d.d_s).map(|k| format!("c{k}")).collect(),
            temporal_names: (0..d.d).map(|j| format!("x{j}")).collect(),
            standardization: None,
        };
        let cfg = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &models, &manifest, 0.7, &cfg).unwrap();
        let (loaded, manifest2, tau, cfg2) = load_checkpoint(&path).unwrap();
        assert_eq!(models.planner.mlp.flat_values(), loaded.planner.mlp.flat_values());
        assert_eq!(models.predictor.mlp.flat_values(), loaded.predictor.mlp.flat_values());
        assert_eq!(models.selector.alpha.values, loaded.selector.alpha.values);
        assert_eq!(manifest, manifest2);
        assert_eq!(tau, 0.7);
        assert_eq!(serde_json::to_string(&cfg).unwrap(), serde_json::to_string(&cfg2).unwrap());
    }

    #[test]
    fn checkpoint_rejects_inconsistent_shapes() {
        let d = small_dims();
        let models = init_models(d, 23).unwrap();
        let manifest = DatasetManifest {
            d_s: d.d_s,
            d: d.d,
            horizon: d.horizon,
            classes: d.classes,
            context_costs: vec![1.0; d.d_s],
            temporal_costs: vec![1.0; d.d],
            context_names: (0..d.d_s).map(|k| format!("c{k}")).collect(),
            temporal_names: (0..d.d).map(|j| format!("x{j}")).collect(),
            standardization: None,
        };
        let mut ckpt = Checkpoint::from_models(&models, &manifest, 1.0, &TrainConfig::default());
        ckpt.alpha.pop();
        assert!(ckpt.into_models().is_err());
    }
}
