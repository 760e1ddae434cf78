//! Trajectory exports: per-instance rollout summaries, the aggregate
//! feature-transition graph (JSON and DOT), a per-timestep mean-cost table,
//! and a termination-step histogram. Nodes are `(feature, timestep)` cells;
//! an edge joins each acquisition step to the record's next one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::infer::TrajectoryRecord;

/// Condensed view of one record: which features were taken at which times.
#[derive(Debug, Clone, Serialize)]
pub struct RolloutExport {
    pub instance_id: String,
    /// Indices of acquired context features.
    pub context_features: Vec<usize>,
    /// One entry per timestep with at least one acquisition.
    pub acquisitions: Vec<AcquisitionStep>,
    pub termination_step: Option<usize>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcquisitionStep {
    pub t: usize,
    pub features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphNode {
    pub feature: usize,
    pub t: usize,
    /// Fraction of records that acquired this cell.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphEdge {
    pub from_feature: usize,
    pub from_t: usize,
    pub to_feature: usize,
    pub to_t: usize,
    /// Fraction of records whose acquisition at `from_t` is followed next by
    /// an acquisition step containing `to_feature` at `to_t`.
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionGraph {
    pub n_records: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

fn acquisition_steps(record: &TrajectoryRecord) -> Vec<(usize, Vec<usize>)> {
    record
        .steps
        .iter()
        .filter_map(|step| {
            let features: Vec<usize> = step
                .acquired
                .iter()
                .enumerate()
                .filter(|(_, &b)| b != 0.0)
                .map(|(j, _)| j)
                .collect();
            (!features.is_empty()).then_some((step.t, features))
        })
        .collect()
}

pub fn rollout_export(record: &TrajectoryRecord) -> RolloutExport {
    RolloutExport {
        instance_id: record.instance_id.clone(),
        context_features: record
            .context_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(k, _)| k)
            .collect(),
        acquisitions: acquisition_steps(record)
            .into_iter()
            .map(|(t, features)| AcquisitionStep { t, features })
            .collect(),
        termination_step: record.termination_step,
        total_cost: record.costs.total,
    }
}

/// Aggregate transition graph over a record set. Each record contributes at
/// most once to any node or edge (binary counting), so frequencies and
/// weights are fractions of records.
pub fn build_transition_graph(records: &[TrajectoryRecord]) -> Result<TransitionGraph> {
    if records.is_empty() {
        return Err(Error::Eval("transition graph needs at least one record".into()));
    }
    let n = records.len() as f64;
    let mut node_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut edge_counts: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
    for record in records {
        let steps = acquisition_steps(record);
        for (t, features) in &steps {
            for &j in features {
                *node_counts.entry((*t, j)).or_default() += 1;
            }
        }
        for window in steps.windows(2) {
            let (t_from, from_features) = &window[0];
            let (t_to, to_features) = &window[1];
            for &m in from_features {
                for &j in to_features {
                    *edge_counts.entry((*t_from, m, *t_to, j)).or_default() += 1;
                }
            }
        }
    }
    Ok(TransitionGraph {
        n_records: records.len(),
        nodes: node_counts
            .into_iter()
            .map(|((t, feature), count)| GraphNode { feature, t, frequency: count as f64 / n })
            .collect(),
        edges: edge_counts
            .into_iter()
            .map(|((from_t, from_feature, to_t, to_feature), count)| GraphEdge {
                from_feature,
                from_t,
                to_feature,
                to_t,
                weight: count as f64 / n,
            })
            .collect(),
    })
}

fn node_name(feature: usize, t: usize) -> String {
    format!("f{feature}@t{t}")
}

/// Render the graph in DOT. Node labels carry acquisition frequencies, edge
/// labels the transition fractions.
pub fn render_dot(graph: &TransitionGraph) -> String {
    let mut out = String::from("digraph acquisitions {\n  rankdir=LR;\n");
    for node in &graph.nodes {
        out.push_str(&format!(
            "  \"{}\" [label=\"{} ({:.3})\"];\n",
            node_name(node.feature, node.t),
            node_name(node.feature, node.t),
            node.frequency
        ));
    }
    for edge in &graph.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{:.3}\"];\n",
            node_name(edge.from_feature, edge.from_t),
            node_name(edge.to_feature, edge.to_t),
            edge.weight
        ));
    }
    out.push_str("}\n");
    out
}

/// Mean per-step temporal cost at each timestep, over all records.
pub fn per_timestep_mean_costs(records: &[TrajectoryRecord]) -> Result<Vec<(usize, f64)>> {
    if records.is_empty() {
        return Err(Error::Eval("cost table needs at least one record".into()));
    }
    let horizon = records[0].steps.len();
    let mut table = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut sum = 0.0;
        for record in records {
            let step = record
                .steps
                .get(t - 1)
                .ok_or_else(|| Error::Eval(format!("record {} is missing step {t}", record.instance_id)))?;
            sum += step.cost;
        }
        table.push((t, sum / records.len() as f64));
    }
    Ok(table)
}

/// Histogram of termination steps; records that never terminated are
/// reported under the label "none".
pub fn termination_histogram(records: &[TrajectoryRecord]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<Option<usize>, usize> = BTreeMap::new();
    for record in records {
        *counts.entry(record.termination_step).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(step, count)| {
            (step.map_or_else(|| "none".to_string(), |t| t.to_string()), count)
        })
        .collect()
}

/// Write all export artifacts into `out_dir` and return the paths written:
/// `rollouts.json`, `transition_graph.json`, `transition_graph.dot`,
/// `per_timestep_costs.csv`, `termination_histogram.csv`.
pub fn export_trajectories(records: &[TrajectoryRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Eval("nothing to export: record set is empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let rollouts: Vec<RolloutExport> = records.iter().map(rollout_export).collect();
    let rollout_path = out_dir.join("rollouts.json");
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&rollout_path)?),
        &rollouts,
    )?;
    written.push(rollout_path);

    let graph = build_transition_graph(records)?;
    let graph_path = out_dir.join("transition_graph.json");
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&graph_path)?),
        &graph,
    )?;
    written.push(graph_path);

    let dot_path = out_dir.join("transition_graph.dot");
    std::fs::write(&dot_path, render_dot(&graph))?;
    written.push(dot_path);

    let cost_path = out_dir.join("per_timestep_costs.csv");
    let mut cost_csv = String::from("t,mean_cost\n");
    for (t, mean) in per_timestep_mean_costs(records)? {
        cost_csv.push_str(&format!("{t},{mean}\n"));
    }
    std::fs::write(&cost_path, cost_csv)?;
    written.push(cost_path);

    let hist_path = out_dir.join("termination_histogram.csv");
    let mut hist_csv = String::from("termination_step,count\n");
    for (label, count) in termination_histogram(records) {
        hist_csv.push_str(&format!("{label},{count}\n"));
    }
    std::fs::write(&hist_path, hist_csv)?;
    written.push(hist_path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::{RecordCosts, StepRecord};

    /// Record acquiring the given single features at the given times over a
    /// 4-step horizon (feature space of width 2).
    fn record(id: &str, acquisitions: &[(usize, usize)], termination: Option<usize>) -> TrajectoryRecord {
        let steps = (1..=4)
            .map(|t| {
                let mut acquired = vec![0.0, 0.0];
                let mut cost = 0.0;
                for &(at, j) in acquisitions {
                    if at == t {
                        acquired[j] = 1.0;
                        cost += 1.0;
                    }
                }
                StepRecord {
                    t,
                    prediction: vec![0.5, 0.5],
                    acquired: acquired.clone(),
                    replanned: acquired.iter().any(|&b| b != 0.0),
                    cost,
                }
            })
            .collect();
        let temporal = acquisitions.len() as f64;
        TrajectoryRecord {
            instance_id: id.into(),
            context_mask: vec![1.0, 0.0],
            steps,
            termination_step: termination,
            costs: RecordCosts { context: 1.0, temporal, total: 1.0 + temporal },
        }
    }

    #[test]
    fn single_record_produces_one_edge_with_unit_weight() {
        let records = vec![record("a", &[(1, 0), (3, 1)], Some(3))];
        let graph = build_transition_graph(&records).unwrap();
        assert_eq!(graph.nodes.len(), 2);
        assert_eq!(graph.edges.len(), 1);
        let edge = &graph.edges[0];
        assert_eq!(
            (edge.from_feature, edge.from_t, edge.to_feature, edge.to_t, edge.weight),
            (0, 1, 1, 3, 1.0)
        );
    }

    #[test]
    fn graph_matches_brute_force_pairwise_scan() {
        let records = vec![
            record("a", &[(1, 0), (2, 1), (4, 0)], Some(4)),
            record("b", &[(1, 0), (2, 1)], Some(2)),
            record("c", &[(2, 1), (4, 0)], Some(4)),
            record("d", &[], Some(0)),
        ];
        let graph = build_transition_graph(&records).unwrap();

        // Brute force: scan every record for consecutive acquisition pairs.
        let mut expected: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
        for r in &records {
            let steps = acquisition_steps(r);
            for i in 0..steps.len().saturating_sub(1) {
                for &m in &steps[i].1 {
                    for &j in &steps[i + 1].1 {
                        *expected.entry((steps[i].0, m, steps[i + 1].0, j)).or_default() += 1;
                    }
                }
            }
        }
        assert_eq!(graph.edges.len(), expected.len());
        for edge in &graph.edges {
            let count = expected[&(edge.from_t, edge.from_feature, edge.to_t, edge.to_feature)];
            assert_eq!(edge.weight, count as f64 / records.len() as f64);
        }

        // Single-feature acquisitions: per-source outgoing weights cannot
        // exceed 1 (termination absorbs the remainder).
        let mut outgoing: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for edge in &graph.edges {
            *outgoing.entry((edge.from_t, edge.from_feature)).or_default() += edge.weight;
        }
        for (&source, &total) in &outgoing {
            assert!(total <= 1.0 + 1e-12, "source {source:?} exceeds 1: {total}");
        }

        // Node frequencies count records, not repeats.
        let f01 = graph.nodes.iter().find(|n| n.t == 1 && n.feature == 0).unwrap();
        assert_eq!(f01.frequency, 0.5);
        // Edge timesteps strictly increase and endpoints are nodes.
        for edge in &graph.edges {
            assert!(edge.to_t > edge.from_t);
            assert!(graph.nodes.iter().any(|n| n.t == edge.from_t && n.feature == edge.from_feature));
            assert!(graph.nodes.iter().any(|n| n.t == edge.to_t && n.feature == edge.to_feature));
        }
    }

    #[test]
    fn empty_acquisitions_give_empty_graph_and_zero_histogram_mass() {
        let records = vec![record("a", &[], Some(0)), record("b", &[], Some(0))];
        let graph = build_transition_graph(&records).unwrap();
        assert!(graph.nodes.is_empty());
        assert!(graph.edges.is_empty());
        let hist = termination_histogram(&records);
        assert_eq!(hist, vec![("0".to_string(), 2)]);
    }

    #[test]
    fn export_writes_all_artifacts() {
        let records = vec![
            record("a", &[(1, 0), (3, 1)], Some(3)),
            record("b", &[(2, 0)], Some(2)),
        ];
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("exports");
        let written = export_trajectories(&records, &out).unwrap();
        assert_eq!(written.len(), 5);
        for path in &written {
            assert!(path.exists(), "{path:?} missing");
        }

        let dot = std::fs::read_to_string(out.join("transition_graph.dot")).unwrap();
        assert!(dot.starts_with("digraph acquisitions {"));
        assert!(dot.contains("\"f0@t1\" -> \"f1@t3\""));
        assert!(dot.trim_end().ends_with('}'));

        let rollouts: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("rollouts.json")).unwrap()).unwrap();
        assert_eq!(rollouts.as_array().unwrap().len(), 2);
        assert_eq!(rollouts[0]["acquisitions"][0]["t"], 1);
        assert_eq!(rollouts[0]["context_features"][0], 0);

        let costs = std::fs::read_to_string(out.join("per_timestep_costs.csv")).unwrap();
        let mut lines = costs.lines();
        assert_eq!(lines.next().unwrap(), "t,mean_cost");
        assert_eq!(lines.next().unwrap(), "1,0.5"); // record a acquired at t=1

        let hist = std::fs::read_to_string(out.join("termination_histogram.csv")).unwrap();
        assert!(hist.starts_with("termination_step,count"));
        assert!(hist.contains("2,1") && hist.contains("3,1"));

        assert!(export_trajectories(&[], &out).is_err());
    }
}
