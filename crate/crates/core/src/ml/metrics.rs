//! Evaluation metrics: 3-class confusion, defect-vs-nominal binarization,
//! macro averages, one-vs-rest ROC AUC, and per-layer accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ablation::ModalityConfig, ModelKind, N_CLASSES};
use crate::fusion::Condition;
use crate::{Error, Result};

/// Counts after collapsing both hole sizes into a single defect class.
/// Positive = defect present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarizedCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl BinarizedCounts {
    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn)
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Accuracy statistics across repeated training runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_runs: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_accuracy: f64,
}

/// Full evaluation record for one (modality, model) cell.
///
/// `accuracy` is 3-class (confusion trace over total); `precision`,
/// `recall`, and `f1` are the binarized defect-detection values, with the
/// 3-class macro variants alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub modality: Option<ModalityConfig>,
    pub model: Option<ModelKind>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub auc_roc: f64,
    pub auc_averaging: String,
    /// Rows are truth, columns are prediction, class-code order.
    pub confusion_matrix: [[usize; N_CLASSES]; N_CLASSES],
    pub binarized: BinarizedCounts,
    pub per_layer_accuracy: BTreeMap<usize, f64>,
    pub run_stats: Option<RunStats>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("metrics serialization failed: {e}")))
    }
}

fn is_defect(c: Condition) -> bool {
    matches!(c, Condition::Hole3mm | Condition::Hole5mm)
}

/// Tie-grouped trapezoidal ROC AUC. `None` when either class is absent.
fn roc_auc_binary(scores: &[f64], is_positive: &[bool]) -> Option<f64> {
    let n_pos = is_positive.iter().filter(|&&b| b).count();
    let n_neg = is_positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut area = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // Consume the whole tie group before adding its trapezoid, so equal
        // scores contribute a single diagonal segment.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if is_positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        prev_tp = tp;
        prev_fp = fp;
    }
    Some(area / (n_pos as f64 * n_neg as f64))
}

/// Metrics over one prediction set. `probabilities[i]` must be a finite
/// distribution for row `i`. Layer and run fields start empty; callers with
/// that context fill them in.
pub fn classification_metrics(
    truth: &[Condition],
    predicted: &[Condition],
    probabilities: &[[f64; 3]],
) -> Result<MetricsReport> {
    let n = truth.len();
    if n == 0 {
        return Err(Error::Schema("metrics need at least one row".into()));
    }
    if predicted.len() != n || probabilities.len() != n {
        return Err(Error::Schema(format!(
            "metrics input lengths disagree: {} truth, {} predicted, {} probability rows",
            n,
            predicted.len(),
            probabilities.len()
        )));
    }
    for (i, p) in probabilities.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 || p.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "probability row {i} is not a distribution: {p:?}"
            )));
        }
    }

    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t.code()][p.code()] += 1;
    }
    let trace: usize = (0..N_CLASSES).map(|k| confusion[k][k]).sum();
    let accuracy = trace as f64 / n as f64;

    let mut binarized = BinarizedCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (&t, &p) in truth.iter().zip(predicted) {
        match (is_defect(t), is_defect(p)) {
            (true, true) => binarized.tp += 1,
            (false, true) => binarized.fp += 1,
            (true, false) => binarized.fn_ += 1,
            (false, false) => binarized.tn += 1,
        }
    }

    // Macro averages over the fixed 3-class label set; an empty
    // denominator contributes 0.
    let mut macro_precision = 0.0;
    let mut macro_recall = 0.0;
    let mut macro_f1 = 0.0;
    for k in 0..N_CLASSES {
        let row: usize = confusion[k].iter().sum();
        let col: usize = (0..N_CLASSES).map(|t| confusion[t][k]).sum();
        let p = BinarizedCounts::ratio(confusion[k][k], col);
        let r = BinarizedCounts::ratio(confusion[k][k], row);
        macro_precision += p;
        macro_recall += r;
        if p + r > 0.0 {
            macro_f1 += 2.0 * p * r / (p + r);
        }
    }
    macro_precision /= N_CLASSES as f64;
    macro_recall /= N_CLASSES as f64;
    macro_f1 /= N_CLASSES as f64;

    // Macro one-vs-rest AUC over classes present on both sides.
    let mut aucs = Vec::new();
    for k in 0..N_CLASSES {
        let scores: Vec<f64> = probabilities.iter().map(|p| p[k]).collect();
        let positives: Vec<bool> = truth.iter().map(|&t| t.code() == k).collect();
        if let Some(a) = roc_auc_binary(&scores, &positives) {
            aucs.push(a);
        }
    }
    let auc_roc = if aucs.is_empty() {
        0.5
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    };

    Ok(MetricsReport {
        modality: None,
        model: None,
        accuracy,
        precision: binarized.precision(),
        recall: binarized.recall(),
        f1: binarized.f1(),
        macro_precision,
        macro_recall,
        macro_f1,
        auc_roc,
        auc_averaging: "macro-ovr".into(),
        confusion_matrix: confusion,
        binarized,
        per_layer_accuracy: BTreeMap::new(),
        run_stats: None,
    })
}

/// Accuracy per layer index. Every row lands in exactly one bucket, so the
/// count-weighted mean over the map equals the overall accuracy. Expected
/// layers with no rows, and rows outside the expected set, produce warnings.
pub fn layerwise_accuracy(
    truth: &[Condition],
    predicted: &[Condition],
    layer_indices: &[usize],
    expected_layers: &[usize],
) -> Result<(BTreeMap<usize, f64>, Vec<String>)> {
    let n = truth.len();
    if predicted.len() != n || layer_indices.len() != n {
        return Err(Error::Schema(format!(
            "layerwise input lengths disagree: {} truth, {} predicted, {} layers",
            n,
            predicted.len(),
            layer_indices.len()
        )));
    }
    let mut hits: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for i in 0..n {
        let entry = hits.entry(layer_indices[i]).or_insert((0, 0));
        entry.1 += 1;
        if truth[i] == predicted[i] {
            entry.0 += 1;
        }
    }
    let mut warnings = Vec::new();
    for &layer in expected_layers {
        if !hits.contains_key(&layer) {
            warnings.push(format!("layer {layer} has no evaluation rows"));
        }
    }
    for (&layer, &(_, total)) in &hits {
        if !expected_layers.contains(&layer) {
            warnings.push(format!("unexpected layer {layer} with {total} row(s)"));
        }
    }
    let map = hits
        .into_iter()
        .map(|(layer, (ok, total))| (layer, ok as f64 / total as f64))
        .collect();
    Ok((map, warnings))
}
