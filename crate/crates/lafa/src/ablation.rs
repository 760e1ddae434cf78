//! Baseline and ablation acquisition policies. All modes share the trained
//! predictor so metric differences reflect the acquisition strategy alone;
//! only the learned modes consult the planner and context selector.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::infer::{
    infer_dataset, summarize_costs, CostSummary, RecordCosts, StepRecord, TrajectoryRecord,
};
use crate::model::Models;
use crate::objective::CostSpec;
use crate::rng::{stream, stream_rng};

/// Acquisition policy variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationMode {
    /// The trained policy exactly as checkpointed.
    Learned,
    /// Learned temporal policy with the context mask forced to all-ones.
    LearnedAllContext,
    /// Learned temporal policy with the context mask forced to all-zeros.
    LearnedNoContext,
    /// Each temporal cell acquired independently with this probability; no
    /// context is acquired.
    RandomRate(f64),
    /// Every feature acquired at every k-th timestep; no context.
    FixedInterval(usize),
    /// Everything: full context and every temporal cell.
    AcquireAll,
    /// Nothing at all.
    AcquireNone,
}

/// Replay a fixed binary plan through the predictor, producing a record in
/// the same shape as learned inference: per-step predictions, costs, and a
/// termination step at the last acquisition (0 if there is none).
fn scripted_record(
    models: &Models,
    instance: &Instance,
    context_mask: &Array1<f64>,
    plan: &Array2<f64>,
    costs: &CostSpec,
) -> Result<TrajectoryRecord> {
    let dims = models.predictor.dims;
    let masked_context = context_mask * &instance.context;
    let context_cost = context_mask.dot(&costs.context);
    let mut masked_hist = Array2::zeros((dims.horizon, dims.d));
    let mut temporal_cost = 0.0;
    let mut steps = Vec::with_capacity(dims.horizon);
    let mut last_acquisition = 0usize;
    for t in 1..=dims.horizon {
        let r = t - 1;
        let mut step_cost = 0.0;
        let mut any = false;
        for j in 0..dims.d {
            if plan[(r, j)] != 0.0 {
                masked_hist[(r, j)] = instance.temporal[(r, j)];
                step_cost += costs.temporal[j];
                any = true;
            }
        }
        if any {
            last_acquisition = t;
            temporal_cost += step_cost;
        }
        let prediction = models
            .predictor
            .predict(masked_hist.view(), masked_context.view(), t)?
            .to_vec();
        steps.push(StepRecord {
            t,
            prediction,
            acquired: plan.row(r).to_vec(),
            replanned: any,
            cost: step_cost,
        });
    }
    Ok(TrajectoryRecord {
        instance_id: instance.id.clone(),
        context_mask: context_mask.to_vec(),
        steps,
        termination_step: Some(last_acquisition),
        costs: RecordCosts {
            context: context_cost,
            temporal: temporal_cost,
            total: context_cost + temporal_cost,
        },
    })
}

/// Run one policy variant over a dataset. `seed` only matters for
/// `RandomRate`, which draws one independent stream per instance position.
pub fn ablation_policy(
    mode: AblationMode,
    models: &Models,
    instances: &[Instance],
    costs: &CostSpec,
    tau: f64,
    seed: u64,
) -> Result<(Vec<TrajectoryRecord>, Option<CostSummary>)> {
    let dims = models.predictor.dims;
    match mode {
        AblationMode::Learned => infer_dataset(models, instances, costs, tau),
        AblationMode::LearnedAllContext | AblationMode::LearnedNoContext => {
            // Saturate the context logits so the thresholds are forced; the
            // planner still conditions on the (forced) masked context.
            let logit = if mode == AblationMode::LearnedAllContext { 1e9 } else { -1e9 };
            let mut forced = models.clone();
            forced.selector.alpha.values.fill(logit);
            infer_dataset(&forced, instances, costs, tau)
        }
        AblationMode::RandomRate(rate) => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("acquisition rate {rate} outside [0, 1]")));
            }
            let no_context = Array1::zeros(dims.d_s);
            let mut records = Vec::with_capacity(instances.len());
            for (i, instance) in instances.iter().enumerate() {
                let mut rng = stream_rng(seed, &[stream::ABLATION, i as u64]);
                let plan = Array2::from_shape_fn((dims.horizon, dims.d), |_| {
                    f64::from(rng.random_range(0.0..1.0) < rate)
                });
                records.push(scripted_record(models, instance, &no_context, &plan, costs)?);
            }
            let summary = summarize_costs(&records);
            Ok((records, summary))
        }
        AblationMode::FixedInterval(k) => {
            if k == 0 {
                return Err(Error::Config("acquisition interval must be at least 1".into()));
            }
            let no_context = Array1::zeros(dims.d_s);
            let plan = Array2::from_shape_fn((dims.horizon, dims.d), |(r, _)| {
                f64::from((r + 1) % k == 0)
            });
            let mut records = Vec::with_capacity(instances.len());
            for instance in instances {
                records.push(scripted_record(models, instance, &no_context, &plan, costs)?);
            }
            let summary = summarize_costs(&records);
            Ok((records, summary))
        }
        AblationMode::AcquireAll | AblationMode::AcquireNone => {
            let bit = f64::from(mode == AblationMode::AcquireAll);
            let context_mask = Array1::from_elem(dims.d_s, bit);
            let plan = Array2::from_elem((dims.horizon, dims.d), bit);
            let mut records = Vec::with_capacity(instances.len());
            for instance in instances {
                records.push(scripted_record(models, instance, &context_mask, &plan, costs)?);
            }
            let summary = summarize_costs(&records);
            Ok((records, summary))
        }
    }
}
