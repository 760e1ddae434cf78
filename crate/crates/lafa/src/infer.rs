//! Deterministic inference: threshold-gated context acquisition, then a
//! replan-on-acquire pass over the horizon. Noise is removed — every gate is
//! a plain threshold on its logit — so repeated runs are bitwise identical.
//!
//! The planner is consulted at `t = 0` for the initial plan and again only
//! when an acquisition actually happens; between acquisitions the plan is
//! frozen. Predictions are emitted at every timestep regardless of
//! acquisitions, and the context charge is incurred exactly once.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::gating::st_gate;
use crate::model::Models;
use crate::objective::{keep_after, CostSpec};

/// One timestep of an inference trajectory. `cost` is the temporal charge
/// incurred at this step (zero unless an acquisition happened here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub prediction: Vec<f64>,
    pub acquired: Vec<f64>,
    pub replanned: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordCosts {
    pub context: f64,
    pub temporal: f64,
    pub total: f64,
}

/// Full account of one inference run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instance_id: String,
    pub context_mask: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Timestep at which the plan became empty: 0 if the initial plan was
    /// already empty, otherwise the acquisition step whose replan proposed
    /// nothing further.
    pub termination_step: Option<usize>,
    pub costs: RecordCosts,
}

/// First planned acquisition in a future-restricted plan: `(time, mask row)`
/// of the earliest nonzero row, or `None` for termination. Callers restrict
/// the grid with [`keep_after`] first, which guarantees the returned time
/// exceeds the current one.
pub fn next_acquisition(plan: ArrayView2<f64>) -> Option<(usize, Array1<f64>)> {
    plan.rows()
        .into_iter()
        .enumerate()
        .find(|(_, row)| row.iter().any(|&v| v != 0.0))
        .map(|(r, row)| (r + 1, row.to_owned()))
}

/// Hard-threshold a logit grid with zero noise.
fn threshold_grid(logits: &Array2<f64>, tau: f64) -> Array2<f64> {
    logits.mapv(|l| st_gate(l, 0.0, tau).hard)
}

/// Run the deterministic acquisition policy on one instance.
pub fn infer(models: &Models, instance: &Instance, costs: &CostSpec, tau: f64) -> Result<TrajectoryRecord> {
    let dims = models.planner.dims;
    let (horizon, d, d_s) = (dims.horizon, dims.d, dims.d_s);
    if !models.all_finite() {
        return Err(Error::Config("checkpoint contains non-finite parameters".into()));
    }
    if instance.temporal.nrows() != horizon
        || instance.temporal.ncols() != d
        || instance.context.len() != d_s
    {
        return Err(Error::Data(format!(
            "instance {}: shape disagrees with model dimensions",
            instance.id
        )));
    }
    if costs.context.len() != d_s || costs.temporal.len() != d {
        return Err(Error::Config("cost vectors disagree with model dimensions".into()));
    }

    // Stage 1: one-time context acquisition by thresholding the logits.
    let m_s = models.selector.alpha.values.mapv(|l| st_gate(l, 0.0, tau).hard);
    let masked_context = &m_s * &instance.context;
    let context_cost = m_s.dot(&costs.context);

    // Initial plan from the empty history.
    let mut masked_hist = Array2::zeros((horizon, d));
    let logits = models.planner.logits(masked_hist.view(), 0, masked_context.view())?;
    let mut plan = keep_after(threshold_grid(&logits, tau).view(), 0);
    let mut next = next_acquisition(plan.view());
    let mut termination_step = if next.is_none() { Some(0) } else { None };

    let mut temporal_cost = 0.0;
    let mut steps = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let due = matches!(&next, Some((t_next, _)) if *t_next == t);
        let mut acquired = Array1::zeros(d);
        let mut step_cost = 0.0;
        if due {
            let (_, row) = next.take().unwrap();
            let r = t - 1;
            for j in 0..d {
                masked_hist[(r, j)] = row[j] * instance.temporal[(r, j)];
            }
            step_cost = row.dot(&costs.temporal);
            temporal_cost += step_cost;
            acquired = row;

            // Acquire and replan: future rows only.
            let logits = models.planner.logits(masked_hist.view(), t, masked_context.view())?;
            plan = keep_after(threshold_grid(&logits, tau).view(), t);
            next = next_acquisition(plan.view());
            if next.is_none() && termination_step.is_none() {
                termination_step = Some(t);
            }
        }
        let prediction = models
            .predictor
            .predict(masked_hist.view(), masked_context.view(), t)?
            .to_vec();
        steps.push(StepRecord { t, prediction, acquired: acquired.to_vec(), replanned: due, cost: step_cost });
    }

    Ok(TrajectoryRecord {
        instance_id: instance.id.clone(),
        context_mask: m_s.to_vec(),
        steps,
        termination_step,
        costs: RecordCosts {
            context: context_cost,
            temporal: temporal_cost,
            total: context_cost + temporal_cost,
        },
    })
}

/// Arithmetic means of per-record costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub mean_total: f64,
    pub mean_temporal: f64,
    pub mean_context: f64,
}

/// Run inference on every instance. The summary is `None` for an empty
/// dataset (means are undefined).
pub fn infer_dataset(
    models: &Models,
    instances: &[Instance],
    costs: &CostSpec,
    tau: f64,
) -> Result<(Vec<TrajectoryRecord>, Option<CostSummary>)> {
    let mut records = Vec::with_capacity(instances.len());
    for instance in instances {
        records.push(infer(models, instance, costs, tau)?);
    }
    let summary = summarize_costs(&records);
    Ok((records, summary))
}

/// Mean costs over a record set (`None` when empty).
pub fn summarize_costs(records: &[TrajectoryRecord]) -> Option<CostSummary> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    Some(CostSummary {
        mean_total: records.iter().map(|r| r.costs.total).sum::<f64>() / n,
        mean_temporal: records.iter().map(|r| r.costs.temporal).sum::<f64>() / n,
        mean_context: records.iter().map(|r| r.costs.context).sum::<f64>() / n,
    })
}

pub fn save_records(records: &[TrajectoryRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), records)?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = std::fs::File::open(path)?;
    let records: Vec<TrajectoryRecord> = serde_json::from_reader(std::io::BufReader::new(file))?;
    Ok(records)
}
