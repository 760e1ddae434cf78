//! Dataset schema, JSON I/O, deterministic synthetic generation, splits,
//! and train-statistics standardization.
//!
//! On disk a dataset is a single JSON document:
//!
//! ```json
//! {
//!   "manifest": { "d_s": 6, "d": 8, "T": 10, "C": 2,
//!                 "context_costs": [...], "temporal_costs": [...],
//!                 "context_names": [...], "temporal_names": [...] },
//!   "instances": [ { "id": "inst-000000", "context": [...],
//!                    "temporal": [[...], ...], "labels": [...] } ]
//! }
//! ```
//!
//! `temporal` is a `T x d` grid (row = timestep), `labels` has one class id
//! in `0..C` per timestep. An optional `standardization` block in the
//! manifest records the affine transform that was applied to the features
//! (written by training so inference can reproduce it).

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Per-feature affine transform fitted on the training split:
/// `x -> (x - mean) / std`, applied identically at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub context_mean: Vec<f64>,
    pub context_std: Vec<f64>,
    pub temporal_mean: Vec<f64>,
    pub temporal_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub d_s: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "C")]
    pub classes: usize,
    pub context_costs: Vec<f64>,
    pub temporal_costs: Vec<f64>,
    pub context_names: Vec<String>,
    pub temporal_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.d_s == 0 || self.d == 0 || self.horizon == 0 {
            return Err(Error::Data("manifest: dimensions d_s, d, T must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Data(format!("manifest: C must be at least 2, got {}", self.classes)));
        }
        if self.context_costs.len() != self.d_s {
            return Err(Error::Data(format!(
                "manifest: context_costs has {} entries, expected d_s = {}",
                self.context_costs.len(),
                self.d_s
            )));
        }
        if self.temporal_costs.len() != self.d {
            return Err(Error::Data(format!(
                "manifest: temporal_costs has {} entries, expected d = {}",
                self.temporal_costs.len(),
                self.d
            )));
        }
        if self.context_names.len() != self.d_s || self.temporal_names.len() != self.d {
            return Err(Error::Data("manifest: feature name lists must match d_s and d".into()));
        }
        if self.context_costs.iter().chain(self.temporal_costs.iter()).any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Data("manifest: costs must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One longitudinal record: static context, a `T x d` feature grid, and a
/// label per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub context: Array1<f64>,
    pub temporal: Array2<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub instances: Vec<Instance>,
}

// Wire-format mirror of `Instance` (plain nested lists in JSON).
#[derive(Serialize, Deserialize)]
struct InstanceWire {
    id: String,
    context: Vec<f64>,
    temporal: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetWire {
    manifest: DatasetManifest,
    instances: Vec<InstanceWire>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        let mut seen = HashSet::new();
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::Data(format!("instance {}: duplicate id", inst.id)));
            }
            if inst.context.len() != self.manifest.d_s {
                return Err(Error::Data(format!(
                    "instance {}: field context has {} entries, expected {}",
                    inst.id,
                    inst.context.len(),
                    self.manifest.d_s
                )));
            }
            if inst.temporal.nrows() != self.manifest.horizon || inst.temporal.ncols() != self.manifest.d {
                return Err(Error::Data(format!(
                    "instance {}: field temporal is {}x{}, expected {}x{}",
                    inst.id,
                    inst.temporal.nrows(),
                    inst.temporal.ncols(),
                    self.manifest.horizon,
                    self.manifest.d
                )));
            }
            if inst.labels.len() != self.manifest.horizon {
                return Err(Error::Data(format!(
                    "instance {}: field labels has {} entries, expected T = {}",
                    inst.id,
                    inst.labels.len(),
                    self.manifest.horizon
                )));
            }
            if let Some(&bad) = inst.labels.iter().find(|&&y| y >= self.manifest.classes) {
                return Err(Error::Data(format!(
                    "instance {}: field labels contains class {bad} outside 0..{}",
                    inst.id, self.manifest.classes
                )));
            }
            if inst.context.iter().any(|v| !v.is_finite())
                || inst.temporal.iter().any(|v| !v.is_finite())
            {
                return Err(Error::Data(format!(
                    "instance {}: field context/temporal contains a non-finite value",
                    inst.id
                )));
            }
        }
        Ok(())
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let wire = DatasetWire {
        manifest: dataset.manifest.clone(),
        instances: dataset
            .instances
            .iter()
            .map(|inst| InstanceWire {
                id: inst.id.clone(),
                context: inst.context.to_vec(),
                temporal: inst.temporal.rows().into_iter().map(|r| r.to_vec()).collect(),
                labels: inst.labels.clone(),
            })
            .collect(),
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &wire)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let wire: DatasetWire = serde_json::from_reader(file)?;
    let d = wire.manifest.d;
    let mut instances = Vec::with_capacity(wire.instances.len());
    for inst in wire.instances {
        let rows = inst.temporal.len();
        let flat: Vec<f64> = inst.temporal.iter().flatten().copied().collect();
        if inst.temporal.iter().any(|r| r.len() != d) {
            return Err(Error::Data(format!(
                "instance {}: field temporal has a row whose width differs from d = {d}",
                inst.id
            )));
        }
        let temporal = Array2::from_shape_vec((rows, d), flat)
            .map_err(|e| Error::Data(format!("instance {}: field temporal: {e}", inst.id)))?;
        instances.push(Instance {
            id: inst.id,
            context: Array1::from(inst.context),
            temporal,
            labels: inst.labels,
        });
    }
    let dataset = Dataset { manifest: wire.manifest, instances };
    dataset.validate()?;
    Ok(dataset)
}

/// Recipe for a synthetic longitudinal dataset with a planted signal.
///
/// A latent AR(1) process `z_{t+1} = rho z_t + sqrt(1-rho^2) eps` drives the
/// informative temporal features (`z_t` plus observation noise); the
/// informative context features shift a per-instance bias. Labels bucket the
/// resulting score into `C` classes whose thresholds are calibrated on a
/// pilot sample so the classes are equiprobable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_instances: usize,
    pub d_s: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "C")]
    pub classes: usize,
    pub informative_context: usize,
    pub informative_temporal: usize,
    pub ar_coefficient: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Optional per-feature cost overrides; default is 1.0 everywhere.
    #[serde(default)]
    pub context_costs: Option<Vec<f64>>,
    #[serde(default)]
    pub temporal_costs: Option<Vec<f64>>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::Data("synthetic spec: n_instances must be positive".into()));
        }
        if self.d_s == 0 || self.d == 0 || self.horizon == 0 {
            return Err(Error::Data("synthetic spec: d_s, d, T must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Data("synthetic spec: C must be at least 2".into()));
        }
        if self.informative_context == 0 || self.informative_context > self.d_s {
            return Err(Error::Data("synthetic spec: informative_context must be in 1..=d_s".into()));
        }
        if self.informative_temporal == 0 || self.informative_temporal > self.d {
            return Err(Error::Data("synthetic spec: informative_temporal must be in 1..=d".into()));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(Error::Data("synthetic spec: ar_coefficient must be in [0, 1)".into()));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::Data("synthetic spec: noise_std must be finite and non-negative".into()));
        }
        if let Some(c) = &self.context_costs {
            if c.len() != self.d_s {
                return Err(Error::Data("synthetic spec: context_costs length must equal d_s".into()));
            }
        }
        if let Some(c) = &self.temporal_costs {
            if c.len() != self.d {
                return Err(Error::Data("synthetic spec: temporal_costs length must equal d".into()));
            }
        }
        Ok(())
    }
}

/// Signed weights with magnitude in [0.7, 1.3] so that every informative
/// feature carries comparable, non-negligible signal.
fn signal_weights(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag: f64 = rng.random_range(0.7..1.3);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

const PILOT_SAMPLES: usize = 10_000;

/// Deterministic synthetic generation. Per-instance content depends only on
/// (seed, instance index, spec), so regenerating with a larger `n_instances`
/// leaves earlier instances bit-identical.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut wrng = stream_rng(spec.seed, &[stream::DATA_WEIGHTS]);
    let w_x = signal_weights(spec.informative_temporal, &mut wrng);
    let w_c = signal_weights(spec.informative_context, &mut wrng);

    // Pilot draw from the stationary distribution of the score, used to place
    // class thresholds at equiprobable quantiles.
    let mut prng = stream_rng(spec.seed, &[stream::DATA_PILOT]);
    let mut pilot: Vec<f64> = (0..PILOT_SAMPLES)
        .map(|_| {
            let z: f64 = prng.sample(StandardNormal);
            let temporal: f64 = w_x
                .iter()
                .map(|w| {
                    let eta: f64 = prng.sample(StandardNormal);
                    w * (z + spec.noise_std * eta)
                })
                .sum();
            let context: f64 = w_c
                .iter()
                .map(|w| {
                    let c: f64 = prng.sample(StandardNormal);
                    w * c
                })
                .sum();
            temporal + context
        })
        .collect();
    pilot.sort_by(|a, b| a.total_cmp(b));
    let thresholds: Vec<f64> =
        (1..spec.classes).map(|k| pilot[k * PILOT_SAMPLES / spec.classes]).collect();
    let bucket = |score: f64| thresholds.iter().filter(|&&th| score > th).count();

    let ar_innov = (1.0 - spec.ar_coefficient * spec.ar_coefficient).sqrt();
    let mut instances = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        let mut rng = stream_rng(spec.seed, &[stream::DATA_INSTANCE, i as u64]);
        let context = Array1::from_shape_fn(spec.d_s, |_| rng.sample::<f64, _>(StandardNormal));
        let bias: f64 = (0..spec.informative_context).map(|k| w_c[k] * context[k]).sum();

        let mut temporal = Array2::zeros((spec.horizon, spec.d));
        let mut labels = Vec::with_capacity(spec.horizon);
        let mut z: f64 = rng.sample(StandardNormal);
        for t in 0..spec.horizon {
            let mut score = bias;
            for j in 0..spec.d {
                let noise: f64 = rng.sample(StandardNormal);
                let value = if j < spec.informative_temporal {
                    z + spec.noise_std * noise
                } else {
                    noise
                };
                temporal[(t, j)] = value;
                if j < spec.informative_temporal {
                    score += w_x[j] * value;
                }
            }
            labels.push(bucket(score));
            let eps: f64 = rng.sample(StandardNormal);
            z = spec.ar_coefficient * z + ar_innov * eps;
        }
        instances.push(Instance { id: format!("inst-{i:06}"), context, temporal, labels });
    }

    let role = |idx: usize, informative: usize| if idx < informative { "signal" } else { "noise" };
    let manifest = DatasetManifest {
        d_s: spec.d_s,
        d: spec.d,
        horizon: spec.horizon,
        classes: spec.classes,
        context_costs: spec.context_costs.clone().unwrap_or_else(|| vec![1.0; spec.d_s]),
        temporal_costs: spec.temporal_costs.clone().unwrap_or_else(|| vec![1.0; spec.d]),
        context_names: (0..spec.d_s)
            .map(|k| format!("c{k}_{}", role(k, spec.informative_context)))
            .collect(),
        temporal_names: (0..spec.d)
            .map(|j| format!("x{j}_{}", role(j, spec.informative_temporal)))
            .collect(),
        standardization: None,
    };
    let dataset = Dataset { manifest, instances };
    dataset.validate()?;
    Ok(dataset)
}

/// Shuffled partition into train/val/test. Fractions must be positive and
/// sum to 1; sizes are rounded with the remainder going to the test split.
pub fn split_instances(
    instances: &[Instance],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<Instance>, Vec<Instance>, Vec<Instance>)> {
    if fractions.iter().any(|f| *f <= 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let n = instances.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Data(format!(
            "split of {n} instances with fractions {fractions:?} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, &[stream::SPLIT]);
    order.shuffle(&mut rng);
    let take = |range: std::ops::Range<usize>| -> Vec<Instance> {
        order[range].iter().map(|&i| instances[i].clone()).collect()
    };
    Ok((take(0..n_train), take(n_train..n_train + n_val), take(n_train + n_val..n)))
}

/// Fit per-feature mean/std on the training split. Temporal statistics pool
/// all timesteps of a feature. Features with (near-)zero variance get std 1
/// so standardization only centers them.
pub fn fit_standardization(train: &[Instance], manifest: &DatasetManifest) -> Standardization {
    let guard = |s: f64| if s < 1e-12 { 1.0 } else { s };
    let n = train.len().max(1) as f64;

    let mut cmean = vec![0.0; manifest.d_s];
    let mut cvar = vec![0.0; manifest.d_s];
    for inst in train {
        for k in 0..manifest.d_s {
            cmean[k] += inst.context[k];
        }
    }
    cmean.iter_mut().for_each(|m| *m /= n);
    for inst in train {
        for k in 0..manifest.d_s {
            let dev = inst.context[k] - cmean[k];
            cvar[k] += dev * dev;
        }
    }
    let cstd: Vec<f64> = cvar.iter().map(|v| guard((v / n).sqrt())).collect();

    let nt = (train.len() * manifest.horizon).max(1) as f64;
    let mut tmean = vec![0.0; manifest.d];
    let mut tvar = vec![0.0; manifest.d];
    for inst in train {
        for row in inst.temporal.rows() {
            for j in 0..manifest.d {
                tmean[j] += row[j];
            }
        }
    }
    tmean.iter_mut().for_each(|m| *m /= nt);
    for inst in train {
        for row in inst.temporal.rows() {
            for j in 0..manifest.d {
                let dev = row[j] - tmean[j];
                tvar[j] += dev * dev;
            }
        }
    }
    let tstd: Vec<f64> = tvar.iter().map(|v| guard((v / nt).sqrt())).collect();

    Standardization {
        context_mean: cmean,
        context_std: cstd,
        temporal_mean: tmean,
        temporal_std: tstd,
    }
}

pub fn apply_standardization(instances: &mut [Instance], s: &Standardization) {
    for inst in instances {
        for (k, v) in inst.context.iter_mut().enumerate() {
            *v = (*v - s.context_mean[k]) / s.context_std[k];
        }
        for mut row in inst.temporal.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - s.temporal_mean[j]) / s.temporal_std[j];
            }
        }
    }
}
