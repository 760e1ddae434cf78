//! Cost-coefficient sweep: train one policy per lambda on an internal split
//! and report the cost/performance frontier on the held-out test part.

use std::path::Path;

use serde::Serialize;

use crate::data::{apply_standardization, fit_standardization, Dataset};
use crate::error::{Error, Result};
use crate::infer::infer_dataset;
use crate::metrics::pooled_record_metrics;
use crate::model::{init_models, ModelDims};
use crate::objective::CostSpec;
use crate::train::{pretrain_predictor, train, TrainConfig};

/// One frontier point. `total_cost` is defined as
/// `temporal_cost + context_cost`, so the accounting identity is exact.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub total_cost: f64,
    pub temporal_cost: f64,
    pub context_cost: f64,
    pub auroc: f64,
    pub auprc: f64,
}

/// Sweep result: one row per lambda that trained successfully, sorted by
/// lambda descending, plus `(lambda, reason)` for any that failed.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(f64, String)>,
}

/// The standard 64/16/20 split used throughout.
pub const SPLIT_FRACTIONS: [f64; 3] = [0.64, 0.16, 0.20];

/// Train and evaluate one policy per cost coefficient. The dataset is split
/// 64/16/20, standardized on the training part, and — when
/// `cfg.share_pretrained` is set — the predictor is pretrained once and
/// copied into every run so rows differ only in the acquisition policy.
pub fn sweep(dataset: &Dataset, lambdas: &[f64], cfg: &TrainConfig) -> Result<SweepOutcome> {
    if lambdas.is_empty() {
        return Err(Error::Config("sweep needs at least one lambda".into()));
    }
    if lambdas.iter().any(|l| *l < 0.0 || !l.is_finite()) {
        return Err(Error::Config("lambdas must be finite and non-negative".into()));
    }
    cfg.validate()?;
    dataset.validate()?;

    let (mut train_set, mut val_set, mut test_set) =
        crate::data::split_instances(&dataset.instances, SPLIT_FRACTIONS, cfg.seed)?;
    let standardization = fit_standardization(&train_set, &dataset.manifest);
    apply_standardization(&mut train_set, &standardization);
    apply_standardization(&mut val_set, &standardization);
    apply_standardization(&mut test_set, &standardization);

    let dims = ModelDims::from_manifest(&dataset.manifest);
    let costs = CostSpec::from_manifest(&dataset.manifest)?;
    let shared_predictor = if cfg.share_pretrained {
        Some(pretrain_predictor(&train_set, &val_set, dims, cfg)?)
    } else {
        None
    };

    let mut sorted: Vec<f64> = lambdas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut rows = Vec::with_capacity(sorted.len());
    let mut failures = Vec::new();
    for &lambda in &sorted {
        let run_cfg = TrainConfig { lambda, ..cfg.clone() };
        let result = (|| -> Result<SweepRow> {
            let mut models = init_models(dims, run_cfg.seed)?;
            models.predictor = match &shared_predictor {
                Some(p) => p.clone(),
                None => pretrain_predictor(&train_set, &val_set, dims, &run_cfg)?,
            };
            train(&mut models, &train_set, &val_set, &run_cfg, &costs)?;
            let (records, summary) = infer_dataset(&models, &test_set, &costs, run_cfg.tau)?;
            let summary =
                summary.ok_or_else(|| Error::Eval("empty test split in sweep".into()))?;
            let report = pooled_record_metrics(&records, &test_set, dims.classes)?;
            Ok(SweepRow {
                lambda,
                total_cost: summary.mean_temporal + summary.mean_context,
                temporal_cost: summary.mean_temporal,
                context_cost: summary.mean_context,
                auroc: report.auroc,
                auprc: report.auprc,
            })
        })();
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((lambda, e.to_string())),
        }
    }
    Ok(SweepOutcome { rows, failures })
}

/// Write sweep rows as CSV with the fixed column contract.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    writer
        .write_record(["lambda", "total_cost", "temporal_cost", "context_cost", "auroc", "auprc"])
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    for row in rows {
        writer
            .write_record([
                row.lambda.to_string(),
                row.total_cost.to_string(),
                row.temporal_cost.to_string(),
                row.context_cost.to_string(),
                row.auroc.to_string(),
                row.auprc.to_string(),
            ])
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    writer.flush()?;
    Ok(())
}
