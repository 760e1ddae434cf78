//! Ranking metrics: AUROC (Mann–Whitney with tie correction), AUPRC
//! (average precision over threshold groups), and macro one-vs-rest
//! multiclass wrappers. Predictions from all timesteps of all instances are
//! pooled before computing a metric, giving one scalar per policy run.

use std::collections::HashMap;

use ndarray::ArrayView2;

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::infer::TrajectoryRecord;

/// Area under the ROC curve via the rank-sum statistic. Tied scores
/// contribute 0.5 per pair (average ranks).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Eval(format!(
            "auroc: {} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Eval("auroc: non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Eval("auroc undefined: only one class present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks within tie groups (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: precision accumulated at each positive, sweeping the
/// threshold from high to low with tied scores treated as one group.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Eval(format!(
            "auprc: {} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Eval("auprc: non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::Eval("auprc undefined: no positive labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut ap = 0.0;
    let mut seen = 0.0;
    let mut seen_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_pos = 0.0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                group_pos += 1.0;
            }
            j += 1;
        }
        seen += (j - i) as f64;
        seen_pos += group_pos;
        // Every positive in the tie group gets the group-end precision.
        ap += group_pos * (seen_pos / seen);
        i = j;
    }
    Ok(ap / n_pos as f64)
}

/// Pooled metrics plus any classes that had to be skipped (absent from the
/// labels, so their one-vs-rest problem is undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auprc: f64,
    pub skipped_classes: Vec<usize>,
}

/// Macro one-vs-rest AUROC/AUPRC over an `n x C` probability matrix. With
/// `C = 2` this reduces exactly to the binary metrics on the class-1
/// probability (one-vs-rest for class 0 is the same ranking mirrored).
pub fn multiclass_metrics(probs: ArrayView2<f64>, labels: &[usize]) -> Result<MetricsReport> {
    let classes = probs.ncols();
    if classes < 2 {
        return Err(Error::Eval("multiclass metrics need at least 2 classes".into()));
    }
    if probs.nrows() != labels.len() {
        return Err(Error::Eval(format!(
            "multiclass metrics: {} rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Eval(format!("label {bad} out of range for {classes} classes")));
    }

    if classes == 2 {
        let scores: Vec<f64> = probs.column(1).to_vec();
        let bits: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        return Ok(MetricsReport {
            auroc: auroc(&scores, &bits)?,
            auprc: auprc(&scores, &bits)?,
            skipped_classes: vec![],
        });
    }

    let mut roc_sum = 0.0;
    let mut prc_sum = 0.0;
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for c in 0..classes {
        let present = labels.iter().any(|&l| l == c);
        let rest = labels.iter().any(|&l| l != c);
        if !present || !rest {
            skipped.push(c);
            continue;
        }
        let scores: Vec<f64> = probs.column(c).to_vec();
        let bits: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        roc_sum += auroc(&scores, &bits)?;
        prc_sum += auprc(&scores, &bits)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Eval("multiclass metrics undefined: no scorable class".into()));
    }
    Ok(MetricsReport {
        auroc: roc_sum / used as f64,
        auprc: prc_sum / used as f64,
        skipped_classes: skipped,
    })
}

/// Spearman rank correlation (average ranks on ties in both variables).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Eval("spearman needs two equal-length series of at least 2".into()));
    }
    let rank = |v: &[f64]| -> Result<Vec<f64>> {
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::Eval("spearman: non-finite value".into()));
        }
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j < order.len() && v[order[j]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + 1 + j) as f64 / 2.0;
            for &idx in &order[i..j] {
                ranks[idx] = avg;
            }
            i = j;
        }
        Ok(ranks)
    };
    let rx = rank(x)?;
    let ry = rank(y)?;
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..x.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        var_x += (rx[i] - mean).powi(2);
        var_y += (ry[i] - mean).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::Eval("spearman undefined: a series is constant".into()));
    }
    Ok(num / (var_x * var_y).sqrt())
}

/// Pool per-timestep predictions from trajectory records against the true
/// labels and compute the (macro) metrics. Records are matched to instances
/// by id; every record must have a prediction for every timestep.
pub fn pooled_record_metrics(
    records: &[TrajectoryRecord],
    instances: &[Instance],
    classes: usize,
) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Eval("no records to evaluate".into()));
    }
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let horizon = records[0].steps.len();
    let mut probs = ndarray::Array2::zeros((records.len() * horizon, classes));
    let mut labels = Vec::with_capacity(records.len() * horizon);
    for (r, record) in records.iter().enumerate() {
        let instance = by_id.get(record.instance_id.as_str()).ok_or_else(|| {
            Error::Eval(format!("record references unknown instance {}", record.instance_id))
        })?;
        if record.steps.len() != horizon || instance.labels.len() != horizon {
            return Err(Error::Eval(format!(
                "instance {}: step count disagrees with horizon {horizon}",
                record.instance_id
            )));
        }
        for (t, step) in record.steps.iter().enumerate() {
            if step.prediction.len() != classes {
                return Err(Error::Eval(format!(
                    "instance {}: prediction at t={} has {} entries, expected {classes}",
                    record.instance_id,
                    t + 1,
                    step.prediction.len()
                )));
            }
            for c in 0..classes {
                probs[(r * horizon + t, c)] = step.prediction[c];
            }
            labels.push(instance.labels[t]);
        }
    }
    multiclass_metrics(probs.view(), &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::assert_close;
    use crate::rng::stream_rng;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn auroc_worked_example() {
        // Pairs ordered correctly: 3 of 4 (0.35 < 0.4 is the one inversion).
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert_close(auroc(&scores, &labels).unwrap(), 0.75, 1e-15);
    }

    #[test]
    fn auroc_edge_cases() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        // All ties: every pair counts half.
        assert_eq!(auroc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
        // Single class is undefined.
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auroc(&[0.1, f64::NAN], &[true, false]).is_err());
    }

    #[test]
    fn auprc_worked_example() {
        // Threshold sweep: precision 1/1 at the first positive, 2/3 at the
        // second; average precision (1 + 2/3) / 2.
        let scores = [0.9, 0.8, 0.1];
        let labels = [true, false, true];
        assert_close(auprc(&scores, &labels).unwrap(), 0.8333333333333333, 1e-12);
    }

    #[test]
    fn auprc_edge_cases() {
        assert_eq!(auprc(&[0.8, 0.9, 0.1], &[true, true, false]).unwrap(), 1.0);
        // Constant scores: one tie group; AP equals prevalence.
        let labels = [true, false, false, true, false];
        assert_close(auprc(&[0.3; 5], &labels).unwrap(), 0.4, 1e-15);
        assert!(auprc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn auprc_random_scores_approach_prevalence() {
        let mut rng = stream_rng(7, &[80]);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.3).collect();
        let prevalence = labels.iter().filter(|&&l| l).count() as f64 / n as f64;
        let ap = auprc(&scores, &labels).unwrap();
        assert!((ap - prevalence).abs() < 0.02, "ap {ap} vs prevalence {prevalence}");
    }

    #[test]
    fn binary_multiclass_reduces_to_binary() {
        let mut rng = stream_rng(8, &[81]);
        let n = 200;
        let mut probs = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        for i in 0..n {
            let p: f64 = rng.random_range(0.0..1.0);
            probs[(i, 0)] = 1.0 - p;
            probs[(i, 1)] = p;
            labels.push(usize::from(rng.random_range(0.0..1.0) < p));
        }
        let report = multiclass_metrics(probs.view(), &labels).unwrap();
        let scores: Vec<f64> = probs.column(1).to_vec();
        let bits: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        assert_eq!(report.auroc, auroc(&scores, &bits).unwrap());
        assert_eq!(report.auprc, auprc(&scores, &bits).unwrap());
        assert!(report.skipped_classes.is_empty());
    }

    #[test]
    fn multiclass_skips_absent_classes() {
        // Class 2 never appears: macro average covers classes 0 and 1 only.
        let probs = ndarray::array![
            [0.7, 0.2, 0.1],
            [0.1, 0.8, 0.1],
            [0.6, 0.3, 0.1],
            [0.2, 0.7, 0.1],
        ];
        let labels = [0usize, 1, 0, 1];
        let report = multiclass_metrics(probs.view(), &labels).unwrap();
        assert_eq!(report.skipped_classes, vec![2]);
        assert!(report.auroc > 0.9);
        // All labels one class: nothing scorable.
        assert!(multiclass_metrics(probs.view(), &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn spearman_tracks_monotone_relationships() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let inc = [2.0, 7.0, 9.0, 20.0, 21.0];
        let dec = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_close(spearman(&x, &inc).unwrap(), 1.0, 1e-12);
        assert_close(spearman(&x, &dec).unwrap(), -1.0, 1e-12);
        assert!(spearman(&x, &[1.0; 5]).is_err());
        // Ties get average ranks: still well-defined.
        let tied = [1.0, 1.0, 2.0, 3.0, 3.0];
        let rho = spearman(&x, &tied).unwrap();
        assert!(rho > 0.9);
    }

    proptest! {
        /// AUROC depends only on the ranking, so any strictly increasing
        /// transform of the scores leaves it unchanged.
        #[test]
        fn auroc_invariant_to_monotone_transforms(seed in 0u64..500) {
            let mut rng = stream_rng(seed, &[82]);
            let n = 60;
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_range(0u8..2) == 1).collect();
            labels[0] = true;
            labels[1] = false;
            let base = auroc(&scores, &labels).unwrap();
            let scaled: Vec<f64> = scores.iter().map(|s| 2.5 * s + 7.0).collect();
            let exped: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            prop_assert!((auroc(&scaled, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((auroc(&exped, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
