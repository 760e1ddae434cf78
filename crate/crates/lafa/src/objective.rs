//! Cost accounting, masking operators, and the two objectives:
//!
//! * [`plan_objective`] scores a *fixed* binary plan: prediction
//!   cross-entropy at every timestep under progressively revealed history,
//!   plus `lambda` times the total acquisition cost.
//! * [`relaxed_loss`] is the trainable surrogate evaluated at a mask state
//!   `(M_prev, t)`: the planner proposes logits for the remaining timesteps,
//!   straight-through gates binarize them, and the loss sums prediction
//!   cross-entropy over all future target times plus cost penalties on the
//!   gated plan and the gated context mask. Gradients flow into the planner
//!   and context logits through the gate surrogate and into the predictor
//!   through the prediction terms.
//!
//! Time indexing: timesteps are 1-based (`t = 1..=T`); row `i` of a grid
//! holds timestep `i + 1`. A state time `t` means acquisitions at times
//! `<= t` are settled, so rows at times `> t` of `M_prev` are zero.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetManifest, Instance};
use crate::error::{Error, Result};
use crate::gating::{sample_gumbel, st_gate, GateSample};
use crate::model::{Models, Predictor};
use crate::nn::softmax_cross_entropy;

/// Per-feature acquisition prices.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub context: Array1<f64>,
    pub temporal: Array1<f64>,
}

impl CostSpec {
    pub fn new(context: Array1<f64>, temporal: Array1<f64>) -> Result<Self> {
        let spec = CostSpec { context, temporal };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        CostSpec::new(
            Array1::from(manifest.context_costs.clone()),
            Array1::from(manifest.temporal_costs.clone()),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .context
            .iter()
            .chain(self.temporal.iter())
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(Error::Config("costs must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Cost of acquiring everything: all context plus every temporal feature
    /// at every timestep.
    pub fn acquire_all(&self, horizon: usize) -> f64 {
        self.context.sum() + horizon as f64 * self.temporal.sum()
    }
}

/// Zero-pad a partial history (rows = timesteps so far) to the full horizon.
pub fn pad_to_horizon(partial: ArrayView2<f64>, horizon: usize) -> Result<Array2<f64>> {
    if partial.nrows() > horizon {
        return Err(Error::Config(format!(
            "partial grid has {} rows, more than horizon {horizon}",
            partial.nrows()
        )));
    }
    let mut out = Array2::zeros((horizon, partial.ncols()));
    out.slice_mut(s![..partial.nrows(), ..]).assign(&partial);
    Ok(out)
}

/// Zero all rows at times `<= t`, keeping the strict future. `t = 0` is the
/// identity; `t = T` clears the grid.
pub fn keep_after(grid: ArrayView2<f64>, t: usize) -> Array2<f64> {
    let mut out = grid.to_owned();
    let cut = t.min(out.nrows());
    out.slice_mut(s![..cut, ..]).fill(0.0);
    out
}

/// Zero all rows at times `> t`, keeping the past through `t`. `t = 0`
/// clears the grid; `t = T` is the identity.
pub fn keep_through(grid: ArrayView2<f64>, t: usize) -> Array2<f64> {
    let mut out = grid.to_owned();
    let cut = t.min(out.nrows());
    out.slice_mut(s![cut.., ..]).fill(0.0);
    out
}

/// Total acquisition cost of a trajectory: context mask plus one temporal
/// mask row per timestep.
pub fn total_cost(
    context_mask: ArrayView1<f64>,
    temporal_masks: ArrayView2<f64>,
    costs: &CostSpec,
) -> Result<f64> {
    if context_mask.len() != costs.context.len() {
        return Err(Error::Config(format!(
            "context mask has {} entries, costs have {}",
            context_mask.len(),
            costs.context.len()
        )));
    }
    if temporal_masks.ncols() != costs.temporal.len() {
        return Err(Error::Config(format!(
            "temporal masks have {} columns, costs have {}",
            temporal_masks.ncols(),
            costs.temporal.len()
        )));
    }
    let mut cost = context_mask.dot(&costs.context);
    for row in temporal_masks.rows() {
        cost += row.dot(&costs.temporal);
    }
    Ok(cost)
}

/// A training state: binary acquisition history `M_prev` (full `T x d` grid,
/// rows after time `t` zero) and the decision time `t in 0..=T`.
#[derive(Debug, Clone)]
pub struct MaskState {
    pub m_prev: Array2<f64>,
    pub t: usize,
}

impl MaskState {
    /// State at time `t` induced by a full plan: its first `t` rows.
    pub fn prefix_of(plan: ArrayView2<f64>, t: usize) -> Self {
        MaskState { m_prev: keep_through(plan, t), t }
    }

    pub fn validate(&self, horizon: usize, d: usize) -> Result<()> {
        if self.t > horizon {
            return Err(Error::Config(format!("state time {} outside 0..={horizon}", self.t)));
        }
        if self.m_prev.nrows() != horizon || self.m_prev.ncols() != d {
            return Err(Error::Config(format!(
                "state grid is {}x{}, expected {horizon}x{d}",
                self.m_prev.nrows(),
                self.m_prev.ncols()
            )));
        }
        if self.m_prev.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config("state grid entries must be 0 or 1".into()));
        }
        if self.m_prev.slice(s![self.t.., ..]).iter().any(|&v| v != 0.0) {
            return Err(Error::Config(format!(
                "state grid acquires at times after its own time {}",
                self.t
            )));
        }
        Ok(())
    }
}

fn check_instance(instance: &Instance, horizon: usize, d: usize, d_s: usize) -> Result<()> {
    if instance.temporal.nrows() != horizon
        || instance.temporal.ncols() != d
        || instance.context.len() != d_s
        || instance.labels.len() != horizon
    {
        return Err(Error::Data(format!(
            "instance {}: shape disagrees with model dimensions",
            instance.id
        )));
    }
    Ok(())
}

/// Score a fixed binary plan `(context_mask, plan)` on one instance:
/// prediction cross-entropy at every timestep with the plan revealed through
/// that timestep, plus `lambda` times the total acquisition cost.
pub fn plan_objective(
    predictor: &Predictor,
    instance: &Instance,
    context_mask: ArrayView1<f64>,
    plan: ArrayView2<f64>,
    lambda: f64,
    costs: &CostSpec,
) -> Result<f64> {
    let dims = predictor.dims;
    check_instance(instance, dims.horizon, dims.d, dims.d_s)?;
    if plan.nrows() != dims.horizon || plan.ncols() != dims.d {
        return Err(Error::Config(format!(
            "plan is {}x{}, expected {}x{}",
            plan.nrows(),
            plan.ncols(),
            dims.horizon,
            dims.d
        )));
    }
    let masked_context = &context_mask.to_owned() * &instance.context;

    // One predictor input row per target time; the history block grows row
    // by row as the plan is revealed.
    let mut inputs = Array2::zeros((dims.horizon, predictor.input_dim()));
    let mut history = Array1::zeros(dims.history_len());
    let ctx_base = predictor.context_offset();
    let time_idx = predictor.input_dim() - 1;
    for t in 1..=dims.horizon {
        let row = t - 1;
        for j in 0..dims.d {
            history[row * dims.d + j] = plan[(row, j)] * instance.temporal[(row, j)];
        }
        let mut input = inputs.row_mut(row);
        input.slice_mut(s![..dims.history_len()]).assign(&history);
        input.slice_mut(s![ctx_base..ctx_base + dims.d_s]).assign(&masked_context);
        input[time_idx] = t as f64 / dims.horizon as f64;
    }
    let logits = predictor.mlp.forward_batch(inputs.view())?;
    let mut loss = 0.0;
    for t in 1..=dims.horizon {
        let (ce, _) = softmax_cross_entropy(logits.row(t - 1), instance.labels[t - 1])?;
        loss += ce;
    }
    Ok(loss + lambda * total_cost(context_mask, plan, costs)?)
}

/// Forward style of the straight-through gates inside [`relaxed_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateStyle {
    /// Hard bits forward, sigmoid-derivative gradient backward (training).
    StraightThrough,
    /// Relaxed sigmoid values forward *and* backward, making the loss a
    /// smooth function of the logits. This is what finite differences can
    /// verify; it exists for gradient checking, not training.
    Relaxed,
}

/// Gumbel noise for one loss evaluation: one draw per context gate and per
/// plannable cell (times after the state time).
#[derive(Debug, Clone)]
pub struct GateNoise {
    pub context: Array1<f64>,
    pub plan: Array2<f64>,
}

impl GateNoise {
    /// Draw noise in the pinned order: context gates first (feature order),
    /// then plan rows for times `state_t+1..=T`, each row in feature order.
    /// Cells at or before the state time are never gated, so no draws are
    /// consumed for them.
    pub fn sample(d_s: usize, horizon: usize, d: usize, state_t: usize, rng: &mut ChaCha8Rng) -> Self {
        let context = Array1::from_shape_fn(d_s, |_| sample_gumbel(rng));
        let mut plan = Array2::zeros((horizon, d));
        for r in state_t..horizon {
            for j in 0..d {
                plan[(r, j)] = sample_gumbel(rng);
            }
        }
        GateNoise { context, plan }
    }

    /// Zero noise: gates threshold the raw logits (deterministic mode).
    pub fn zeros(d_s: usize, horizon: usize, d: usize) -> Self {
        GateNoise { context: Array1::zeros(d_s), plan: Array2::zeros((horizon, d)) }
    }
}

/// The relaxed training objective at one state, with gradient accumulation
/// into all three components (`+=` semantics; callers zero grads and scale).
///
/// Value:
/// `sum_{t'=t+1..T} CE(predictor(M_{<=t'} ⊙ x, m̂_s ⊙ s, t'), y_{t'})
///  + lambda * <future plan, temporal costs> + lambda * <m̂_s, context costs>`
///
/// where `m̂_s` gates the context logits, the future plan gates the planner
/// output restricted to times after `t`, and `M_{<=t'}` reveals that plan
/// through `t'` on top of the settled `M_prev`. The context cost term is
/// charged at every state; averaging over a state buffer happens in the
/// caller. At `t = T` the planner is skipped entirely: every planned cell
/// would be masked out, so its loss contribution and gradient are exactly
/// zero.
pub fn relaxed_loss(
    models: &mut Models,
    instance: &Instance,
    state: &MaskState,
    lambda: f64,
    tau: f64,
    costs: &CostSpec,
    noise: &GateNoise,
    style: GateStyle,
) -> Result<f64> {
    let dims = models.planner.dims;
    let (horizon, d, d_s) = (dims.horizon, dims.d, dims.d_s);
    state.validate(horizon, d)?;
    check_instance(instance, horizon, d, d_s)?;
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::Config(format!("temperature {tau} must be positive and finite")));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda {lambda} must be finite and non-negative")));
    }
    if costs.context.len() != d_s || costs.temporal.len() != d {
        return Err(Error::Config("cost vectors disagree with model dimensions".into()));
    }
    if noise.context.len() != d_s || noise.plan.nrows() != horizon || noise.plan.ncols() != d {
        return Err(Error::Config("gate noise shape disagrees with model dimensions".into()));
    }
    let t = state.t;
    let pick = |g: &GateSample| match style {
        GateStyle::StraightThrough => g.hard,
        GateStyle::Relaxed => g.soft,
    };

    // Context gates.
    let ctx_gates: Vec<GateSample> = (0..d_s)
        .map(|k| st_gate(models.selector.alpha.values[k], noise.context[k], tau))
        .collect();
    let m_s = Array1::from_iter(ctx_gates.iter().map(pick));
    let masked_context = &m_s * &instance.context;

    // Settled history values.
    let masked_hist = &state.m_prev * &instance.temporal;

    // Planner forward and plan gates for the strict future.
    let mut plan_value: Array2<f64> = Array2::zeros((horizon, d));
    let mut plan_grad: Array2<f64> = Array2::zeros((horizon, d));
    let planner_tape = if t < horizon {
        let (flat_logits, tape) =
            models.planner.logits_tape(masked_hist.view(), t, masked_context.view())?;
        for r in t..horizon {
            for j in 0..d {
                let g = st_gate(flat_logits[r * d + j], noise.plan[(r, j)], tau);
                plan_value[(r, j)] = pick(&g);
                plan_grad[(r, j)] = g.grad;
            }
        }
        Some(tape)
    } else {
        None
    };

    // Cost terms and their direct gradients on the gate values.
    let mut loss = 0.0;
    let mut d_plan: Array2<f64> = Array2::zeros((horizon, d));
    let mut d_ms: Array1<f64> = Array1::zeros(d_s);
    for r in t..horizon {
        for j in 0..d {
            loss += lambda * costs.temporal[j] * plan_value[(r, j)];
            d_plan[(r, j)] += lambda * costs.temporal[j];
        }
    }
    for k in 0..d_s {
        loss += lambda * costs.context[k] * m_s[k];
        d_ms[k] += lambda * costs.context[k];
    }

    // Prediction terms, batched over target times t+1..=T.
    if t < horizon {
        let n = horizon - t;
        let in_dim = models.predictor.input_dim();
        let ctx_base = models.predictor.context_offset();
        let time_idx = in_dim - 1;
        let hist_len = dims.history_len();

        let mut inputs = Array2::zeros((n, in_dim));
        let mut hist_flat = Array1::zeros(hist_len);
        for (i, &v) in masked_hist.iter().enumerate() {
            hist_flat[i] = v;
        }
        for (i, t_target) in (t + 1..=horizon).enumerate() {
            let r = t_target - 1; // row revealed when predicting time t_target
            for j in 0..d {
                // Rows after the state time have no settled acquisitions, so
                // the revealed value is exactly the gated planner proposal.
                hist_flat[r * d + j] += plan_value[(r, j)] * instance.temporal[(r, j)];
            }
            let mut row = inputs.row_mut(i);
            row.slice_mut(s![..hist_len]).assign(&hist_flat);
            row.slice_mut(s![ctx_base..ctx_base + d_s]).assign(&masked_context);
            row[time_idx] = t_target as f64 / horizon as f64;
        }

        let (logits, tape) = models.predictor.mlp.forward_batch_tape(inputs.view(), None)?;
        let mut upstream = Array2::zeros((n, dims.classes));
        for (i, t_target) in (t + 1..=horizon).enumerate() {
            let (ce, dlogits) = softmax_cross_entropy(logits.row(i), instance.labels[t_target - 1])?;
            loss += ce;
            upstream.row_mut(i).assign(&dlogits);
        }
        let input_grads = models.predictor.mlp.backward_batch(&tape, upstream.view());

        for (i, t_target) in (t + 1..=horizon).enumerate() {
            let g = input_grads.row(i);
            for r in t..t_target {
                for j in 0..d {
                    d_plan[(r, j)] += g[r * d + j] * instance.temporal[(r, j)];
                }
            }
            for k in 0..d_s {
                d_ms[k] += g[ctx_base + k] * instance.context[k];
            }
        }
    }

    // Planner parameters, through the straight-through gate surrogate; the
    // planner also feeds gradient back into the context gates via its input.
    if let Some(tape) = planner_tape {
        let mut upstream = Array1::zeros(dims.history_len());
        for r in t..horizon {
            for j in 0..d {
                upstream[r * d + j] = d_plan[(r, j)] * plan_grad[(r, j)];
            }
        }
        let input_grad = models.planner.mlp.backward(&tape, upstream.view());
        let base = models.planner.context_offset();
        for k in 0..d_s {
            d_ms[k] += input_grad[base + k] * instance.context[k];
        }
    }

    // Context logits.
    for k in 0..d_s {
        models.selector.alpha.grad[k] += d_ms[k] * ctx_gates[k].grad;
    }

    if !loss.is_finite() {
        return Err(Error::Train(format!(
            "non-finite loss at state t={t} (lambda {lambda}, tau {tau})"
        )));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gating::sigmoid;
    use crate::model::{ContextSelector, ModelDims, Planner, Predictor};
    use crate::nn::assert_close;
    use crate::rng::stream_rng;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny_dims() -> ModelDims {
        ModelDims { d_s: 3, d: 2, horizon: 3, classes: 2 }
    }

    /// Small-architecture models so finite differences stay cheap.
    fn tiny_models(seed: u64) -> Models {
        let dims = tiny_dims();
        let mut rng = stream_rng(seed, &[50]);
        Models {
            selector: ContextSelector::new(dims.d_s),
            planner: Planner::new(dims, vec![10, 6], 4, &mut rng).unwrap(),
            predictor: Predictor::new(dims, vec![8], &mut rng).unwrap(),
        }
    }

    fn tiny_instance(seed: u64) -> Instance {
        let dims = tiny_dims();
        let mut rng = stream_rng(seed, &[51]);
        Instance {
            id: "test".into(),
            context: Array1::from_shape_fn(dims.d_s, |_| rng.random_range(-1.5..1.5)),
            temporal: Array2::from_shape_fn((dims.horizon, dims.d), |_| rng.random_range(-1.5..1.5)),
            labels: (0..dims.horizon).map(|_| rng.random_range(0..dims.classes)).collect(),
        }
    }

    fn unit_costs() -> CostSpec {
        let dims = tiny_dims();
        CostSpec::new(Array1::ones(dims.d_s), Array1::ones(dims.d)).unwrap()
    }

    #[test]
    fn pad_extends_with_zero_rows() {
        let partial = array![[1.0, 2.0], [3.0, 4.0]];
        let padded = pad_to_horizon(partial.view(), 4).unwrap();
        assert_eq!(padded.nrows(), 4);
        assert_eq!(padded.slice(s![..2, ..]), partial.view());
        assert!(padded.slice(s![2.., ..]).iter().all(|&v| v == 0.0));
        assert!(pad_to_horizon(partial.view(), 1).is_err());
    }

    #[test]
    fn keep_operators_edge_cases() {
        let v = Array2::from_elem((3, 2), 1.0);
        // keep_after zeroes exactly the first row for t = 1.
        let after = keep_after(v.view(), 1);
        assert!(after.row(0).iter().all(|&x| x == 0.0));
        assert!(after.slice(s![1.., ..]).iter().all(|&x| x == 1.0));
        assert_eq!(keep_after(v.view(), 0), v);
        assert!(keep_after(v.view(), 3).iter().all(|&x| x == 0.0));
        assert!(keep_through(v.view(), 0).iter().all(|&x| x == 0.0));
        assert_eq!(keep_through(v.view(), 3), v);
    }

    proptest! {
        /// The two keep operators partition any grid: their sum restores it.
        #[test]
        fn keep_operators_are_complementary(
            rows in 1usize..6,
            cols in 1usize..5,
            t in 0usize..7,
            seed in 0u64..1000,
        ) {
            let mut rng = stream_rng(seed, &[52]);
            let grid = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-10.0..10.0));
            let t = t.min(rows);
            let sum = keep_after(grid.view(), t) + keep_through(grid.view(), t);
            prop_assert_eq!(sum, grid);
        }
    }

    #[test]
    fn total_cost_worked_example() {
        // Seven context features at 0.3 each, all acquired: 2.1. Temporal
        // costs [1.0, 1.0, 0.5, 0.5]; acquiring feature 0 at three of the
        // timesteps adds 3.0.
        let costs = CostSpec::new(Array1::from_elem(7, 0.3), array![1.0, 1.0, 0.5, 0.5]).unwrap();
        let m_s = Array1::ones(7);
        let mut plan = Array2::zeros((5, 4));
        for t in [0, 2, 4] {
            plan[(t, 0)] = 1.0;
        }
        let c = total_cost(m_s.view(), plan.view(), &costs).unwrap();
        assert_close(c, 5.1, 1e-12);
        // Empty acquisition costs nothing.
        let zero = total_cost(Array1::zeros(7).view(), Array2::zeros((5, 4)).view(), &costs).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn cost_spec_rejects_negative_or_nonfinite() {
        assert!(CostSpec::new(array![1.0, -0.1], array![1.0]).is_err());
        assert!(CostSpec::new(array![1.0], array![f64::NAN]).is_err());
    }

    #[test]
    fn mask_state_validation() {
        let plan = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let state = MaskState::prefix_of(plan.view(), 1);
        state.validate(3, 2).unwrap();
        assert!(state.m_prev.slice(s![1.., ..]).iter().all(|&v| v == 0.0));

        let bad = MaskState { m_prev: plan.clone(), t: 1 };
        assert!(bad.validate(3, 2).is_err()); // future rows non-zero
        let bad = MaskState { m_prev: Array2::from_elem((3, 2), 0.5), t: 3 };
        assert!(bad.validate(3, 2).is_err()); // non-binary entries
        let bad = MaskState { m_prev: Array2::zeros((3, 2)), t: 4 };
        assert!(bad.validate(3, 2).is_err()); // time out of range
    }

    /// Independent re-derivation of plan_objective on a tiny case: manual
    /// masked histories, cross-entropy from predicted probabilities, and a
    /// hand-summed cost term.
    #[test]
    fn plan_objective_matches_manual_scoring() {
        let models = tiny_models(1);
        let instance = tiny_instance(2);
        let costs = unit_costs();
        let dims = tiny_dims();
        let lambda = 0.37;
        let m_s = array![1.0, 0.0, 1.0];
        let plan = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];

        let got = plan_objective(&models.predictor, &instance, m_s.view(), plan.view(), lambda, &costs)
            .unwrap();

        let masked_ctx = &m_s * &instance.context;
        let mut expected = 0.0;
        for t in 1..=dims.horizon {
            let mut hist = Array2::zeros((dims.horizon, dims.d));
            for r in 0..t {
                for j in 0..dims.d {
                    hist[(r, j)] = plan[(r, j)] * instance.temporal[(r, j)];
                }
            }
            let probs = models.predictor.predict(hist.view(), masked_ctx.view(), t).unwrap();
            expected += -probs[instance.labels[t - 1]].ln();
        }
        let mut cost = 0.0;
        for k in 0..dims.d_s {
            cost += m_s[k];
        }
        for r in 0..dims.horizon {
            for j in 0..dims.d {
                cost += plan[(r, j)];
            }
        }
        expected += lambda * cost;
        assert_close(got, expected, 1e-10);
    }

    #[test]
    fn relaxed_loss_at_final_state_is_context_cost_only() {
        let mut models = tiny_models(3);
        models.selector.alpha.values.assign(&array![2.0, -3.0, 0.4]);
        let instance = tiny_instance(4);
        let costs = CostSpec::new(array![0.7, 0.2, 1.1], Array1::ones(2)).unwrap();
        let dims = tiny_dims();
        let state = MaskState {
            m_prev: {
                let mut g = Array2::zeros((dims.horizon, dims.d));
                g[(0, 1)] = 1.0;
                g[(2, 0)] = 1.0;
                g
            },
            t: dims.horizon,
        };
        let mut rng = stream_rng(5, &[53]);
        let noise = GateNoise::sample(dims.d_s, dims.horizon, dims.d, state.t, &mut rng);
        models.zero_grad();
        let lambda = 0.25;
        let loss = relaxed_loss(
            &mut models,
            &instance,
            &state,
            lambda,
            1.0,
            &costs,
            &noise,
            GateStyle::StraightThrough,
        )
        .unwrap();

        let mut expected = 0.0;
        for k in 0..dims.d_s {
            let g = st_gate(models.selector.alpha.values[k], noise.context[k], 1.0);
            expected += lambda * costs.context[k] * g.hard;
        }
        assert_eq!(loss, expected);
        // No planner/predictor gradients at the final state.
        assert!(models.planner.mlp.layers.iter().all(|l| l.w.grad.iter().all(|&g| g == 0.0)));
        assert!(models.predictor.mlp.layers.iter().all(|l| l.w.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn relaxed_loss_with_dead_models_is_pure_uniform_prediction() {
        // Zero planner and predictor parameters plus a hugely negative
        // context logit: nothing is acquired and nothing is charged, and
        // every prediction term is cross-entropy of the uniform distribution.
        let mut models = tiny_models(6);
        let zeros_planner = vec![0.0; models.planner.mlp.param_count()];
        models.planner.mlp.load_flat(&zeros_planner).unwrap();
        let zeros_pred = vec![0.0; models.predictor.mlp.param_count()];
        models.predictor.mlp.load_flat(&zeros_pred).unwrap();
        models.selector.alpha.values.fill(-1e9);

        let instance = tiny_instance(7);
        let dims = tiny_dims();
        let costs = unit_costs();
        let state = MaskState { m_prev: Array2::zeros((dims.horizon, dims.d)), t: 0 };
        let noise = GateNoise::zeros(dims.d_s, dims.horizon, dims.d);
        models.zero_grad();
        let loss = relaxed_loss(
            &mut models,
            &instance,
            &state,
            0.5,
            1.0,
            &costs,
            &noise,
            GateStyle::StraightThrough,
        )
        .unwrap();
        let expected = dims.horizon as f64 * (dims.classes as f64).ln();
        assert_close(loss, expected, 1e-12);
    }

    /// The straight-through loss value must equal a from-scratch recomputation
    /// with plain hard thresholds: gate, reveal, predict, and sum by hand.
    #[test]
    fn relaxed_loss_value_matches_manual_assembly() {
        let dims = tiny_dims();
        let mut models = tiny_models(8);
        models.selector.alpha.values.assign(&array![0.8, -0.3, 0.1]);
        let instance = tiny_instance(9);
        let costs = CostSpec::new(array![0.3, 0.9, 0.5], array![1.2, 0.4]).unwrap();
        let lambda = 0.15;
        let tau = 0.8;
        let full_plan = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];

        for t in 0..=dims.horizon {
            let state = MaskState::prefix_of(full_plan.view(), t);
            let mut rng = stream_rng(100 + t as u64, &[54]);
            let noise = GateNoise::sample(dims.d_s, dims.horizon, dims.d, t, &mut rng);
            models.zero_grad();
            let got = relaxed_loss(
                &mut models,
                &instance,
                &state,
                lambda,
                tau,
                &costs,
                &noise,
                GateStyle::StraightThrough,
            )
            .unwrap();

            // Manual recomputation with hard thresholds.
            let hard = |l: f64, g: f64| f64::from(sigmoid((l + g) / tau) > 0.5);
            let m_s = Array1::from_shape_fn(dims.d_s, |k| {
                hard(models.selector.alpha.values[k], noise.context[k])
            });
            let masked_ctx = &m_s * &instance.context;
            let masked_hist = &state.m_prev * &instance.temporal;
            let mut plan = Array2::zeros((dims.horizon, dims.d));
            if t < dims.horizon {
                let logits = models
                    .planner
                    .logits(masked_hist.view(), t, masked_ctx.view())
                    .unwrap();
                for r in t..dims.horizon {
                    for j in 0..dims.d {
                        plan[(r, j)] = hard(logits[(r, j)], noise.plan[(r, j)]);
                    }
                }
            }
            // Cost of the context mask plus the strictly-future plan rows.
            let future_rows = keep_after(plan.view(), t);
            let mut expected = lambda
                * ((0..dims.d_s).map(|k| costs.context[k] * m_s[k]).sum::<f64>()
                    + future_rows
                        .rows()
                        .into_iter()
                        .map(|row| row.dot(&costs.temporal))
                        .sum::<f64>());
            for t_target in t + 1..=dims.horizon {
                let mut hist = masked_hist.clone();
                for r in t..t_target {
                    for j in 0..dims.d {
                        hist[(r, j)] += plan[(r, j)] * instance.temporal[(r, j)];
                    }
                }
                let probs = models
                    .predictor
                    .predict(hist.view(), masked_ctx.view(), t_target)
                    .unwrap();
                expected += -probs[instance.labels[t_target - 1]].ln();
            }
            assert_close(got, expected, 1e-10);
        }
    }

    /// Gradient check of the relaxed (smooth) style against central finite
    /// differences, over all three components at once, at several states.
    #[test]
    fn relaxed_gradient_check_all_components() {
        let dims = tiny_dims();
        let instance = tiny_instance(11);
        let costs = CostSpec::new(array![0.4, 1.0, 0.6], array![0.9, 1.3]).unwrap();
        let lambda = 0.2;
        let tau = 0.9;
        let full_plan = array![[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]];

        for t in [0usize, 1, 2] {
            let mut models = tiny_models(20 + t as u64);
            let mut arng = stream_rng(30 + t as u64, &[55]);
            models
                .selector
                .alpha
                .values
                .mapv_inplace(|_| arng.random_range(-1.0..1.0));
            let state = MaskState::prefix_of(full_plan.view(), t);
            let mut nrng = stream_rng(40 + t as u64, &[56]);
            let noise = GateNoise::sample(dims.d_s, dims.horizon, dims.d, t, &mut nrng);

            models.zero_grad();
            relaxed_loss(
                &mut models,
                &instance,
                &state,
                lambda,
                tau,
                &costs,
                &noise,
                GateStyle::Relaxed,
            )
            .unwrap();

            // Pack (alpha, planner, predictor) into one parameter vector.
            let mut params = models.selector.alpha.values.to_vec();
            params.extend(models.planner.mlp.flat_values());
            params.extend(models.predictor.mlp.flat_values());
            let mut analytic = models.selector.alpha.grad.to_vec();
            for layer in &models.planner.mlp.layers {
                analytic.extend(layer.w.grad.iter());
                analytic.extend(layer.b.grad.iter());
            }
            for layer in &models.predictor.mlp.layers {
                analytic.extend(layer.w.grad.iter());
                analytic.extend(layer.b.grad.iter());
            }

            let d_s = dims.d_s;
            let n_planner = models.planner.mlp.param_count();
            let mut probe = models.clone();
            let err = crate::nn::finite_difference_check(
                |p| {
                    probe
                        .selector
                        .alpha
                        .values
                        .assign(&Array1::from(p[..d_s].to_vec()));
                    probe.planner.mlp.load_flat(&p[d_s..d_s + n_planner]).unwrap();
                    probe.predictor.mlp.load_flat(&p[d_s + n_planner..]).unwrap();
                    probe.zero_grad();
                    relaxed_loss(
                        &mut probe,
                        &instance,
                        &state,
                        lambda,
                        tau,
                        &costs,
                        &noise,
                        GateStyle::Relaxed,
                    )
                    .unwrap()
                },
                &params,
                &analytic,
                1e-5,
            );
            assert!(err < 1e-4, "state t={t}: max relative gradient error {err}");
        }
    }

    /// With a zero predictor the only gradient reaching the gates is the
    /// cost term, so the context-logit gradient has the closed form
    /// `lambda * c_s[k] * sigmoid'((alpha_k + g_k)/tau)/tau` (plus a planner
    /// input path, which a zero planner also removes).
    #[test]
    fn cost_term_gradient_closed_form() {
        let dims = tiny_dims();
        let mut models = tiny_models(60);
        let zp = vec![0.0; models.planner.mlp.param_count()];
        models.planner.mlp.load_flat(&zp).unwrap();
        let zq = vec![0.0; models.predictor.mlp.param_count()];
        models.predictor.mlp.load_flat(&zq).unwrap();
        models.selector.alpha.values.assign(&array![0.6, -0.9, 0.2]);

        let instance = tiny_instance(61);
        let costs = CostSpec::new(array![0.5, 1.5, 2.0], array![1.0, 3.0]).unwrap();
        let lambda = 0.01;
        let tau = 1.3;
        let state = MaskState { m_prev: Array2::zeros((dims.horizon, dims.d)), t: 0 };
        let mut rng = stream_rng(62, &[57]);
        let noise = GateNoise::sample(dims.d_s, dims.horizon, dims.d, 0, &mut rng);

        models.zero_grad();
        relaxed_loss(
            &mut models,
            &instance,
            &state,
            lambda,
            tau,
            &costs,
            &noise,
            GateStyle::StraightThrough,
        )
        .unwrap();

        for k in 0..dims.d_s {
            let g = st_gate(models.selector.alpha.values[k], noise.context[k], tau);
            assert_close(models.selector.alpha.grad[k], lambda * costs.context[k] * g.grad, 1e-15);
        }
        // The planner bias gradient on its output layer is the upstream
        // itself: lambda * c_x[j] * gate_grad at each future cell.
        let (flat_logits, _) = models
            .planner
            .logits_tape(
                Array2::zeros((dims.horizon, dims.d)).view(),
                0,
                Array1::zeros(dims.d_s).view(),
            )
            .unwrap();
        let out_bias_grad = &models.planner.mlp.layers.last().unwrap().b.grad;
        for r in 0..dims.horizon {
            for j in 0..dims.d {
                let g = st_gate(flat_logits[r * dims.d + j], noise.plan[(r, j)], tau);
                assert_close(
                    out_bias_grad[r * dims.d + j],
                    lambda * costs.temporal[j] * g.grad,
                    1e-15,
                );
            }
        }
    }

    #[test]
    fn gradients_accumulate_across_states() {
        let dims = tiny_dims();
        let mut models = tiny_models(70);
        let instance = tiny_instance(71);
        let costs = unit_costs();
        let state = MaskState { m_prev: Array2::zeros((dims.horizon, dims.d)), t: 0 };
        let noise = GateNoise::zeros(dims.d_s, dims.horizon, dims.d);

        models.zero_grad();
        relaxed_loss(&mut models, &instance, &state, 0.1, 1.0, &costs, &noise, GateStyle::StraightThrough).unwrap();
        let once = models.selector.alpha.grad.clone();
        relaxed_loss(&mut models, &instance, &state, 0.1, 1.0, &costs, &noise, GateStyle::StraightThrough).unwrap();
        let twice = models.selector.alpha.grad.clone();
        for k in 0..dims.d_s {
            assert_close(twice[k], 2.0 * once[k], 1e-12);
        }
    }
}
