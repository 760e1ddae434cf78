//! Training: Adam, predictor pretraining under random masking, offline
//! reference plans, on-policy rollouts, and the joint loop that warms up on
//! reference states before switching to self-generated ones.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::gating::{sample_gumbel, st_gate, GateMode};
use crate::infer::infer_dataset;
use crate::metrics::pooled_record_metrics;
use crate::model::{ModelDims, Models, Predictor};
use crate::objective::{
    plan_objective, relaxed_loss, total_cost, CostSpec, GateNoise, GateStyle, MaskState,
};
use crate::rng::{stream, stream_rng};

fn default_log_interval() -> usize {
    50
}
fn default_max_pretrain_epochs() -> usize {
    100
}
fn default_share_pretrained() -> bool {
    true
}

/// Flat-JSON training configuration. Unlisted keys fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub total_batches: usize,
    pub warmup_batches: usize,
    pub k_candidates: usize,
    pub lr_pretrain: f64,
    pub lr_policy: f64,
    pub lr_predictor_joint: f64,
    pub dropout_rate: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    /// Iterations between validation-metric evaluations in the joint loop
    /// (0 disables them).
    #[serde(default = "default_log_interval")]
    pub log_interval: usize,
    /// Hard cap on pretraining epochs (early stopping usually fires first).
    #[serde(default = "default_max_pretrain_epochs")]
    pub max_pretrain_epochs: usize,
    /// Sweep-only switch: pretrain the predictor once and reuse it for every
    /// cost coefficient instead of pretraining per run.
    #[serde(default = "default_share_pretrained")]
    pub share_pretrained: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.001,
            tau: 1.0,
            batch_size: 64,
            total_batches: 1000,
            warmup_batches: 50,
            k_candidates: 1000,
            lr_pretrain: 0.001,
            lr_policy: 0.001,
            lr_predictor_joint: 0.0001,
            dropout_rate: 0.4,
            seed: 17,
            early_stop_patience: 10,
            log_interval: default_log_interval(),
            max_pretrain_epochs: default_max_pretrain_epochs(),
            share_pretrained: default_share_pretrained(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite and non-negative".into()));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::Config("tau must be positive and finite".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.warmup_batches > self.total_batches {
            return Err(Error::Config(format!(
                "warmup_batches {} exceeds total_batches {}",
                self.warmup_batches, self.total_batches
            )));
        }
        for (name, lr) in [
            ("lr_pretrain", self.lr_pretrain),
            ("lr_policy", self.lr_policy),
            ("lr_predictor_joint", self.lr_predictor_joint),
        ] {
            if lr <= 0.0 || !lr.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam with the standard constants. Moment buffers are keyed to the slice
/// order of the first `step` call, which must stay fixed across calls.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step_count: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update over `(values, grads)` slice pairs.
    pub fn step(&mut self, params: &mut [(&mut [f64], &mut [f64])]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|(v, _)| vec![0.0; v.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer state does not match parameters");
        self.step_count += 1;
        let corr1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let corr2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for (i, (values, grads)) in params.iter_mut().enumerate() {
            assert_eq!(self.m[i].len(), values.len(), "optimizer state does not match parameters");
            for j in 0..values.len() {
                let g = grads[j];
                self.m[i][j] = self.beta1 * self.m[i][j] + (1.0 - self.beta1) * g;
                self.v[i][j] = self.beta2 * self.v[i][j] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i][j] / corr1;
                let v_hat = self.v[i][j] / corr2;
                values[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Collect `(values, grads)` slices for the policy parameters: context
/// logits first, then planner layers. The order is the optimizer-state key.
fn policy_slices(models: &mut Models) -> Vec<(&mut [f64], &mut [f64])> {
    let mut slices = Vec::new();
    let alpha = &mut models.selector.alpha;
    slices.push((
        alpha.values.as_slice_mut().expect("alpha is contiguous"),
        alpha.grad.as_slice_mut().expect("alpha grad is contiguous"),
    ));
    slices.extend(models.planner.mlp.param_slices());
    slices
}

/// A uniformly random subset mask: the subset size is uniform on `0..=len`,
/// then a uniform size-`k` subset is chosen. Every size is equally likely,
/// unlike independent fair coins which concentrate near `len/2`.
pub fn random_subset_mask(len: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let k = rng.random_range(0..=len);
    let mut mask = Array1::zeros(len);
    for idx in rand::seq::index::sample(rng, len, k) {
        mask[idx] = 1.0;
    }
    mask
}

/// Build one pretraining input row: random context subset, independent
/// random subsets on each visible history row (times `<= t_target`), zeros
/// beyond.
fn masked_pretrain_input(
    predictor: &Predictor,
    instance: &Instance,
    t_target: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<f64>> {
    let dims = predictor.dims;
    let ctx_mask = random_subset_mask(dims.d_s, rng);
    let masked_context = &ctx_mask * &instance.context;
    let mut hist = Array2::zeros((dims.horizon, dims.d));
    for r in 0..t_target {
        let row_mask = random_subset_mask(dims.d, rng);
        for j in 0..dims.d {
            hist[(r, j)] = row_mask[j] * instance.temporal[(r, j)];
        }
    }
    predictor.build_input(hist.view(), masked_context.view(), t_target)
}

/// Pretrain a predictor with cross-entropy under random input masking and
/// dropout, early-stopping on a fixed randomly-masked validation set and
/// returning the best-on-validation parameters.
pub fn pretrain_predictor(
    train: &[Instance],
    val: &[Instance],
    dims: ModelDims,
    cfg: &TrainConfig,
) -> Result<Predictor> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("pretraining needs nonempty train and validation splits".into()));
    }
    let mut init_rng = stream_rng(cfg.seed, &[stream::WEIGHT_INIT, 1]);
    let mut predictor = Predictor::standard(dims, &mut init_rng)?;
    let mut opt = Adam::new(cfg.lr_pretrain);

    // Fixed validation inputs: masks drawn once so the early-stopping signal
    // is a deterministic function of the parameters.
    let mut val_rng = stream_rng(cfg.seed, &[stream::PRETRAIN, 1]);
    let mut val_inputs = Array2::zeros((val.len() * dims.horizon, predictor.input_dim()));
    let mut val_labels = Vec::with_capacity(val.len() * dims.horizon);
    for (i, instance) in val.iter().enumerate() {
        for t_target in 1..=dims.horizon {
            let row = masked_pretrain_input(&predictor, instance, t_target, &mut val_rng)?;
            val_inputs.row_mut(i * dims.horizon + t_target - 1).assign(&row);
            val_labels.push(instance.labels[t_target - 1]);
        }
    }

    let samples: Vec<(usize, usize)> = (0..train.len())
        .flat_map(|i| (1..=dims.horizon).map(move |t| (i, t)))
        .collect();

    let mut best_val = f64::INFINITY;
    let mut best_params = predictor.mlp.flat_values();
    let mut stale = 0usize;
    for epoch in 0..cfg.max_pretrain_epochs {
        let mut rng = stream_rng(cfg.seed, &[stream::PRETRAIN, 0, epoch as u64]);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = Array2::zeros((chunk.len(), predictor.input_dim()));
            let mut labels = Vec::with_capacity(chunk.len());
            for (row_i, &si) in chunk.iter().enumerate() {
                let (inst_i, t_target) = samples[si];
                let row = masked_pretrain_input(&predictor, &train[inst_i], t_target, &mut rng)?;
                inputs.row_mut(row_i).assign(&row);
                labels.push(train[inst_i].labels[t_target - 1]);
            }
            let dropout = (cfg.dropout_rate > 0.0).then_some((cfg.dropout_rate, &mut rng));
            let (logits, tape) = predictor.mlp.forward_batch_tape(inputs.view(), dropout)?;
            let mut upstream = Array2::zeros((chunk.len(), dims.classes));
            for i in 0..chunk.len() {
                let (_, grad) = crate::nn::softmax_cross_entropy(logits.row(i), labels[i])?;
                upstream.row_mut(i).assign(&(&grad / chunk.len() as f64));
            }
            predictor.mlp.zero_grad();
            predictor.mlp.backward_batch(&tape, upstream.view());
            opt.step(&mut predictor.mlp.param_slices());
        }

        let logits = predictor.mlp.forward_batch(val_inputs.view())?;
        let mut val_loss = 0.0;
        for (i, &label) in val_labels.iter().enumerate() {
            val_loss += crate::nn::softmax_cross_entropy(logits.row(i), label)?.0;
        }
        val_loss /= val_labels.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Train(format!("non-finite validation loss in pretraining epoch {epoch}")));
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = predictor.mlp.flat_values();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    predictor.mlp.load_flat(&best_params)?;
    Ok(predictor)
}

/// A full acquisition proposal: context mask plus temporal grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePlan {
    pub m_s: Array1<f64>,
    pub plan: Array2<f64>,
}

impl CandidatePlan {
    fn zeros(d_s: usize, d: usize, horizon: usize) -> Self {
        CandidatePlan { m_s: Array1::zeros(d_s), plan: Array2::zeros((horizon, d)) }
    }

    fn ones(d_s: usize, d: usize, horizon: usize) -> Self {
        CandidatePlan { m_s: Array1::ones(d_s), plan: Array2::ones((horizon, d)) }
    }
}

/// `k` fair-coin candidates (bit order: context features, then the grid
/// row-major) with the all-zero and all-one plans appended, so the pool
/// always contains both extremes.
pub fn sample_candidate_plans(
    k: usize,
    d_s: usize,
    d: usize,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<CandidatePlan> {
    let mut pool = Vec::with_capacity(k + 2);
    for _ in 0..k {
        let m_s = Array1::from_shape_fn(d_s, |_| f64::from(rng.random::<bool>()));
        let plan = Array2::from_shape_fn((horizon, d), |_| f64::from(rng.random::<bool>()));
        pool.push(CandidatePlan { m_s, plan });
    }
    pool.push(CandidatePlan::zeros(d_s, d, horizon));
    pool.push(CandidatePlan::ones(d_s, d, horizon));
    pool
}

/// Every possible plan over `d_s + horizon*d` bits (bit `i` of the counter
/// drives position `i`: context first, then the grid row-major). Refused
/// beyond 20 bits.
pub fn enumerate_all_plans(d_s: usize, d: usize, horizon: usize) -> Result<Vec<CandidatePlan>> {
    let bits = d_s + horizon * d;
    if bits > 20 {
        return Err(Error::Config(format!(
            "exhaustive enumeration over {bits} bits is too large"
        )));
    }
    let mut pool = Vec::with_capacity(1 << bits);
    for code in 0u32..(1u32 << bits) {
        let bit = |i: usize| f64::from((code >> i) & 1 == 1);
        let m_s = Array1::from_shape_fn(d_s, |i| bit(i));
        let plan = Array2::from_shape_fn((horizon, d), |(r, j)| bit(d_s + r * d + j));
        pool.push(CandidatePlan { m_s, plan });
    }
    Ok(pool)
}

/// Best-scoring acquisition plan for one training instance, with its score.
#[derive(Debug, Clone)]
pub struct ReferencePlan {
    pub instance_id: String,
    pub m_s: Array1<f64>,
    pub plan: Array2<f64>,
    pub score: f64,
}

/// Argmin of the plan objective over a pool. Ties break toward the lower
/// total cost, then the lower pool index.
fn best_candidate(
    predictor: &Predictor,
    instance: &Instance,
    pool: &[CandidatePlan],
    lambda: f64,
    costs: &CostSpec,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, cand) in pool.iter().enumerate() {
        let score =
            plan_objective(predictor, instance, cand.m_s.view(), cand.plan.view(), lambda, costs)?;
        let cost = total_cost(cand.m_s.view(), cand.plan.view(), costs)?;
        let better = match &best {
            None => true,
            Some((_, bs, bc)) => score < *bs || (score == *bs && cost < *bc),
        };
        if better {
            best = Some((i, score, cost));
        }
    }
    let (idx, score, _) = best.ok_or_else(|| Error::Config("empty candidate pool".into()))?;
    Ok((idx, score))
}

/// Reference plans with caller-provided pools (one per instance). Used when
/// the pool must be controlled exactly, e.g. a full enumeration.
pub fn build_reference_set_from_pools(
    instances: &[Instance],
    predictor: &Predictor,
    lambda: f64,
    costs: &CostSpec,
    pools: &[Vec<CandidatePlan>],
) -> Result<Vec<ReferencePlan>> {
    if pools.len() != instances.len() {
        return Err(Error::Config(format!(
            "{} candidate pools for {} instances",
            pools.len(),
            instances.len()
        )));
    }
    instances
        .iter()
        .zip(pools)
        .map(|(instance, pool)| {
            let (idx, score) = best_candidate(predictor, instance, pool, lambda, costs)?;
            Ok(ReferencePlan {
                instance_id: instance.id.clone(),
                m_s: pool[idx].m_s.clone(),
                plan: pool[idx].plan.clone(),
                score,
            })
        })
        .collect()
}

/// Reference plans over freshly sampled candidate pools. Pools depend only
/// on `(seed, instance position)` — not on `lambda` — so different cost
/// coefficients rank the same candidates.
pub fn build_reference_set(
    instances: &[Instance],
    predictor: &Predictor,
    lambda: f64,
    costs: &CostSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<ReferencePlan>> {
    let dims = predictor.dims;
    instances
        .iter()
        .enumerate()
        .map(|(i, instance)| {
            let mut rng = stream_rng(seed, &[stream::CANDIDATES, i as u64]);
            let pool = sample_candidate_plans(k, dims.d_s, dims.d, dims.horizon, &mut rng);
            let (idx, score) = best_candidate(predictor, instance, &pool, lambda, costs)?;
            Ok(ReferencePlan {
                instance_id: instance.id.clone(),
                m_s: pool[idx].m_s.clone(),
                plan: pool[idx].plan.clone(),
                score,
            })
        })
        .collect()
}

/// One stochastic on-policy rollout: gate the context once, then walk the
/// horizon querying the planner on the history acquired so far and gating
/// only the current row of its proposal.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// States for `t = 0..=T`: prefixes of the executed plan.
    pub states: Vec<MaskState>,
    pub plan: Array2<f64>,
    pub context_mask: Array1<f64>,
    pub cost: f64,
}

pub fn rollout_on_policy(
    models: &Models,
    instance: &Instance,
    tau: f64,
    costs: &CostSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    let dims = models.planner.dims;
    let (horizon, d) = (dims.horizon, dims.d);
    let ctx_gates = models.selector.mask(GateMode::Stochastic, tau, Some(rng))?;
    let context_mask = Array1::from_iter(ctx_gates.iter().map(|g| g.hard));
    let masked_context = &context_mask * &instance.context;

    let mut masked_hist = Array2::zeros((horizon, d));
    let mut plan = Array2::zeros((horizon, d));
    for r in 0..horizon {
        let logits = models.planner.logits(masked_hist.view(), r, masked_context.view())?;
        for j in 0..d {
            let gate = st_gate(logits[(r, j)], sample_gumbel(rng), tau);
            plan[(r, j)] = gate.hard;
            masked_hist[(r, j)] = gate.hard * instance.temporal[(r, j)];
        }
    }
    let states = (0..=horizon).map(|t| MaskState::prefix_of(plan.view(), t)).collect();
    let cost = total_cost(context_mask.view(), plan.view(), costs)?;
    Ok(Rollout { states, plan, context_mask, cost })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    SelfTrain,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::SelfTrain => "self",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub mean_loss: f64,
    pub mean_plan_cost: f64,
    pub n_states: usize,
}

/// One optimizer step: gather states for the batch (reference prefixes in
/// warmup, on-policy rollouts otherwise), average the relaxed loss over all
/// of them, and update policy and predictor parameters.
#[allow(clippy::too_many_arguments)]
pub fn train_iteration(
    models: &mut Models,
    batch: &[&Instance],
    batch_refs: Option<&[&ReferencePlan]>,
    cfg: &TrainConfig,
    costs: &CostSpec,
    policy_opt: &mut Adam,
    predictor_opt: &mut Adam,
    rollout_rng: &mut ChaCha8Rng,
    loss_rng: &mut ChaCha8Rng,
) -> Result<IterationStats> {
    if batch.is_empty() {
        return Err(Error::Train("empty training batch".into()));
    }
    let dims = models.planner.dims;

    // State buffer plus the plan cost used for logging.
    let mut states: Vec<(usize, MaskState)> = Vec::with_capacity(batch.len() * (dims.horizon + 1));
    let mut cost_sum = 0.0;
    match batch_refs {
        Some(refs) => {
            if refs.len() != batch.len() {
                return Err(Error::Train("reference batch does not match instance batch".into()));
            }
            for (slot, reference) in refs.iter().enumerate() {
                cost_sum += total_cost(reference.m_s.view(), reference.plan.view(), costs)?;
                for t in 0..=dims.horizon {
                    states.push((slot, MaskState::prefix_of(reference.plan.view(), t)));
                }
            }
        }
        None => {
            for (slot, instance) in batch.iter().enumerate() {
                let rollout = rollout_on_policy(models, instance, cfg.tau, costs, rollout_rng)?;
                cost_sum += rollout.cost;
                for state in rollout.states {
                    states.push((slot, state));
                }
            }
        }
    }

    models.zero_grad();
    let mut loss_sum = 0.0;
    for (slot, state) in &states {
        let noise = GateNoise::sample(dims.d_s, dims.horizon, dims.d, state.t, loss_rng);
        loss_sum += relaxed_loss(
            models,
            batch[*slot],
            state,
            cfg.lambda,
            cfg.tau,
            costs,
            &noise,
            GateStyle::StraightThrough,
        )?;
    }
    let n_states = states.len();
    models.scale_grad(1.0 / n_states as f64);
    policy_opt.step(&mut policy_slices(models));
    predictor_opt.step(&mut models.predictor.mlp.param_slices());
    if !models.all_finite() {
        return Err(Error::Train("parameters became non-finite after an optimizer step".into()));
    }
    Ok(IterationStats {
        mean_loss: loss_sum / n_states as f64,
        mean_plan_cost: cost_sum / batch.len() as f64,
        n_states,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub iteration: usize,
    pub phase: String,
    pub mean_loss: f64,
    pub mean_plan_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_auroc: Option<f64>,
}

/// The joint loop: `warmup_batches` iterations on reference-induced states,
/// then self-training on rollouts of the current policy. The predictor
/// inside `models` should already be pretrained. Validation AUROC (pooled
/// over timesteps, deterministic inference) is attached every
/// `log_interval` iterations.
pub fn train(
    models: &mut Models,
    train_set: &[Instance],
    val_set: &[Instance],
    cfg: &TrainConfig,
    costs: &CostSpec,
) -> Result<Vec<TrainLogRecord>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let references = if cfg.warmup_batches > 0 {
        build_reference_set(
            train_set,
            &models.predictor,
            cfg.lambda,
            costs,
            cfg.k_candidates,
            cfg.seed,
        )?
    } else {
        Vec::new()
    };

    let mut policy_opt = Adam::new(cfg.lr_policy);
    let mut predictor_opt = Adam::new(cfg.lr_predictor_joint);
    let mut log = Vec::with_capacity(cfg.total_batches);
    for iteration in 0..cfg.total_batches {
        let phase = if iteration < cfg.warmup_batches { Phase::Warmup } else { Phase::SelfTrain };
        let mut batch_rng = stream_rng(cfg.seed, &[stream::BATCH, iteration as u64]);
        let indices: Vec<usize> =
            (0..cfg.batch_size).map(|_| batch_rng.random_range(0..train_set.len())).collect();
        let batch: Vec<&Instance> = indices.iter().map(|&i| &train_set[i]).collect();
        let refs: Option<Vec<&ReferencePlan>> = match phase {
            Phase::Warmup => Some(indices.iter().map(|&i| &references[i]).collect()),
            Phase::SelfTrain => None,
        };

        let mut rollout_rng = stream_rng(cfg.seed, &[stream::ROLLOUT, iteration as u64]);
        let mut loss_rng = stream_rng(cfg.seed, &[stream::LOSS, iteration as u64]);
        let stats = train_iteration(
            models,
            &batch,
            refs.as_deref(),
            cfg,
            costs,
            &mut policy_opt,
            &mut predictor_opt,
            &mut rollout_rng,
            &mut loss_rng,
        )?;

        let evaluate = cfg.log_interval > 0
            && !val_set.is_empty()
            && ((iteration + 1) % cfg.log_interval == 0 || iteration + 1 == cfg.total_batches);
        let val_auroc = if evaluate {
            let (records, _) = infer_dataset(models, val_set, costs, cfg.tau)?;
            pooled_record_metrics(&records, val_set, models.predictor.dims.classes)
                .ok()
                .map(|report| report.auroc)
        } else {
            None
        };
        log.push(TrainLogRecord {
            iteration,
            phase: phase.as_str().to_string(),
            mean_loss: stats.mean_loss,
            mean_plan_cost: stats.mean_plan_cost,
            val_auroc,
        });
    }
    Ok(log)
}
