//! Command-line surface. Events and training logs go to stdout as one JSON
//! object per line; failures go to stderr as a single `error: ...` line with
//! exit codes 1 (usage), 2 (data/config), or 3 (training/numerical).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use lafa::data::{
    apply_standardization, fit_standardization, generate_synthetic, load_dataset, save_dataset,
    split_instances, Dataset, DatasetManifest, Instance, SyntheticSpec,
};
use lafa::export::export_trajectories;
use lafa::infer::{infer_dataset, load_records, save_records};
use lafa::metrics::pooled_record_metrics;
use lafa::model::{init_models, load_checkpoint, save_checkpoint, ModelDims, Models};
use lafa::objective::CostSpec;
use lafa::sweep::{sweep, write_sweep_csv, SPLIT_FRACTIONS};
use lafa::train::{pretrain_predictor, train, TrainConfig};
use lafa::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lafa",
    version,
    about = "Cost-aware longitudinal feature acquisition: generate data, train policies, run inference, evaluate, sweep cost coefficients, export trajectories"
)]
struct Cli {
    /// Override the seed from any loaded config or generator spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a generator spec (JSON).
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the predictor under random masking; save a checkpoint.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint training: warmup on reference plans, then self-training.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to start from (skips pretraining).
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic inference; writes trajectory records as JSON.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pooled AUROC/AUPRC of saved records against dataset labels.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one policy per cost coefficient; write the frontier CSV.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated cost coefficients, e.g. "0.05,0.01,0.001".
        #[arg(long)]
        lambdas: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export rollouts, the transition graph (JSON + DOT), and tables.
    ExportTraj {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let first = e
                .to_string()
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .to_string();
            eprintln!("error: usage: {first}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Split, standardize on the training part, and carry the fitted transform
/// in the manifest so checkpoints can reapply it at inference time. The
/// held-out test part is untouched here; evaluation commands consume
/// whatever dataset file they are pointed at.
struct Prepared {
    manifest: DatasetManifest,
    dims: ModelDims,
    costs: CostSpec,
    train: Vec<Instance>,
    val: Vec<Instance>,
}

fn prepare(dataset: Dataset, seed: u64) -> Result<Prepared> {
    dataset.validate()?;
    let (mut train, mut val, _) = split_instances(&dataset.instances, SPLIT_FRACTIONS, seed)?;
    let standardization = fit_standardization(&train, &dataset.manifest);
    apply_standardization(&mut train, &standardization);
    apply_standardization(&mut val, &standardization);
    let mut manifest = dataset.manifest;
    manifest.standardization = Some(standardization);
    let dims = ModelDims::from_manifest(&manifest);
    let costs = CostSpec::from_manifest(&manifest)?;
    Ok(Prepared { manifest, dims, costs, train, val })
}

fn pretrained_models(prep: &Prepared, cfg: &TrainConfig) -> Result<Models> {
    let predictor = pretrain_predictor(&prep.train, &prep.val, prep.dims, cfg)?;
    let mut models = init_models(prep.dims, cfg.seed)?;
    models.predictor = predictor;
    Ok(models)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out } => {
            let text = std::fs::read_to_string(&spec)?;
            let mut spec: SyntheticSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("generator spec: {e}")))?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let dataset = generate_synthetic(&spec)?;
            save_dataset(&dataset, &out)?;
            emit(json!({
                "event": "gen-data",
                "instances": dataset.instances.len(),
                "out": out.display().to_string(),
            }));
        }
        Command::Pretrain { data, config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let prep = prepare(load_dataset(&data)?, cfg.seed)?;
            let models = pretrained_models(&prep, &cfg)?;
            save_checkpoint(&out, &models, &prep.manifest, cfg.tau, &cfg)?;
            emit(json!({
                "event": "pretrain",
                "train_instances": prep.train.len(),
                "out": out.display().to_string(),
            }));
        }
        Command::Train { data, config, pretrained, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let prep = prepare(load_dataset(&data)?, cfg.seed)?;
            let mut models = match pretrained {
                Some(path) => {
                    let (models, manifest, _, _) = load_checkpoint(&path)?;
                    if ModelDims::from_manifest(&manifest) != prep.dims {
                        return Err(Error::Data(format!(
                            "checkpoint {} was built for different dimensions",
                            path.display()
                        )));
                    }
                    models
                }
                None => pretrained_models(&prep, &cfg)?,
            };
            let log = train(&mut models, &prep.train, &prep.val, &cfg, &prep.costs)?;
            for record in &log {
                emit(serde_json::to_value(record)?);
            }
            save_checkpoint(&out, &models, &prep.manifest, cfg.tau, &cfg)?;
            emit(json!({
                "event": "train",
                "iterations": log.len(),
                "out": out.display().to_string(),
            }));
        }
        Command::Infer { ckpt, data, out } => {
            let (models, manifest, tau, _) = load_checkpoint(&ckpt)?;
            let dataset = load_dataset(&data)?;
            if ModelDims::from_manifest(&dataset.manifest) != models.planner.dims {
                return Err(Error::Data("dataset dimensions disagree with checkpoint".into()));
            }
            let mut instances = dataset.instances;
            if let Some(standardization) = &manifest.standardization {
                apply_standardization(&mut instances, standardization);
            }
            let costs = CostSpec::from_manifest(&manifest)?;
            let (records, summary) = infer_dataset(&models, &instances, &costs, tau)?;
            save_records(&records, &out)?;
            let mut event = json!({
                "event": "infer",
                "records": records.len(),
                "out": out.display().to_string(),
            });
            if let Some(s) = summary {
                event["mean_total_cost"] = json!(s.mean_total);
                event["mean_temporal_cost"] = json!(s.mean_temporal);
                event["mean_context_cost"] = json!(s.mean_context);
            }
            emit(event);
        }
        Command::Eval { records, data } => {
            let records = load_records(&records)?;
            let dataset = load_dataset(&data)?;
            let report =
                pooled_record_metrics(&records, &dataset.instances, dataset.manifest.classes)?;
            emit(json!({
                "event": "eval",
                "auroc": report.auroc,
                "auprc": report.auprc,
                "skipped_classes": report.skipped_classes,
                "records": records.len(),
            }));
        }
        Command::Sweep { data, lambdas, config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let dataset = load_dataset(&data)?;
            let lambdas = lambdas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad lambda '{}': {e}", s.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            let outcome = sweep(&dataset, &lambdas, &cfg)?;
            for (lambda, reason) in &outcome.failures {
                emit(json!({"event": "sweep-failure", "lambda": lambda, "reason": reason}));
            }
            for row in &outcome.rows {
                emit(serde_json::to_value(row)?);
            }
            if outcome.rows.is_empty() {
                return Err(Error::Train("every sweep run failed".into()));
            }
            write_sweep_csv(&outcome.rows, &out)?;
            emit(json!({
                "event": "sweep",
                "rows": outcome.rows.len(),
                "failures": outcome.failures.len(),
                "out": out.display().to_string(),
            }));
        }
        Command::ExportTraj { records, out_dir } => {
            let records = load_records(&records)?;
            let written = export_trajectories(&records, &out_dir)?;
            emit(json!({
                "event": "export-traj",
                "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            }));
        }
    }
    Ok(())
}
