//! Classifier suite: four learners over feature tables, stratified
//! splitting, grid search, metrics, and modality ablation.
//!
//! Every model trains on a [`FeatureTable`](crate::fusion::FeatureTable)
//! whose columns were already selected and standardized. Training is
//! deterministic given (spec, data, seed): all randomness flows through
//! counter-based generators, so parallel and serial runs serialize to
//! identical bytes.

mod ablation;
mod boost;
mod logistic;
mod metrics;
mod mlp;
mod search;
mod tree;

pub use ablation::{
    evaluate_ablation, prepare_modality, AblationOutcome, ModalityConfig, PreparedData,
};
pub use logistic::loss_trace;
pub use metrics::{
    classification_metrics, layerwise_accuracy, BinarizedCounts, MetricsReport, RunStats,
};
pub use mlp::gradient_check_max_rel_error;
pub use search::{grid_search, stratified_kfold, GridPoint, GridSearchOutcome, ParamGrid};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fusion::{Condition, FeatureTable};
use crate::rng::rng_for;
use crate::{Error, Result};

pub const N_CLASSES: usize = 3;

/// Learner families covered by the comparative evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::LogisticRegression,
        ModelKind::Mlp,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::Mlp => "mlp",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }
}

/// A single hyperparameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl HyperValue {
    pub fn as_f64(self) -> f64 {
        match self {
            HyperValue::Bool(b) => b as i64 as f64,
            HyperValue::Int(i) => i as f64,
            HyperValue::Real(r) => r,
        }
    }

    fn total_cmp(self, other: HyperValue) -> std::cmp::Ordering {
        self.as_f64().total_cmp(&other.as_f64())
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Real(v)
    }
}

impl From<i64> for HyperValue {
    fn from(v: i64) -> Self {
        HyperValue::Int(v)
    }
}

impl From<i32> for HyperValue {
    fn from(v: i32) -> Self {
        HyperValue::Int(v as i64)
    }
}

impl From<usize> for HyperValue {
    fn from(v: usize) -> Self {
        HyperValue::Int(v as i64)
    }
}

impl From<bool> for HyperValue {
    fn from(v: bool) -> Self {
        HyperValue::Bool(v)
    }
}

/// Model family plus named hyperparameters and the training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hyperparameters: BTreeMap<String, HyperValue>,
    pub rng_seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, rng_seed: u64) -> Self {
        ModelSpec {
            kind,
            hyperparameters: BTreeMap::new(),
            rng_seed,
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<HyperValue>) -> Self {
        self.hyperparameters.insert(name.into(), value.into());
        self
    }

    fn get_f64(&self, name: &str, default: f64, lo: f64, hi: f64) -> Result<f64> {
        let v = self
            .hyperparameters
            .get(name)
            .map(|h| h.as_f64())
            .unwrap_or(default);
        if !(v >= lo && v <= hi) {
            return Err(Error::Config(format!(
                "{} hyperparameter {name} = {v} outside [{lo}, {hi}]",
                self.kind.as_str()
            )));
        }
        Ok(v)
    }

    fn get_usize(&self, name: &str, default: usize, lo: usize, hi: usize) -> Result<usize> {
        let v = self.get_f64(name, default as f64, lo as f64, hi as f64)?;
        if v.fract() != 0.0 {
            return Err(Error::Config(format!(
                "{} hyperparameter {name} must be an integer, got {v}",
                self.kind.as_str()
            )));
        }
        Ok(v as usize)
    }

    fn get_bool(&self, name: &str, default: bool) -> Result<bool> {
        match self.hyperparameters.get(name) {
            None => Ok(default),
            Some(HyperValue::Bool(b)) => Ok(*b),
            Some(other) => Err(Error::Config(format!(
                "{} hyperparameter {name} must be a boolean, got {other:?}",
                self.kind.as_str()
            ))),
        }
    }

    fn known_names(kind: ModelKind) -> &'static [&'static str] {
        match kind {
            ModelKind::LogisticRegression => &["c"],
            ModelKind::Mlp => &[
                "hidden_layers",
                "hidden_units",
                "l2",
                "dropout",
                "learning_rate",
                "patience",
                "max_epochs",
            ],
            ModelKind::RandomForest => &["n_trees", "max_depth", "min_samples_split"],
            ModelKind::GradientBoosting => &[
                "n_trees",
                "learning_rate",
                "max_depth",
                "subsample",
                "regularized",
                "colsample",
            ],
        }
    }

    /// Reject unknown names and out-of-range values for this model family.
    pub fn validate(&self) -> Result<()> {
        let known = Self::known_names(self.kind);
        for name in self.hyperparameters.keys() {
            if !known.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown {} hyperparameter {name:?} (expected one of {known:?})",
                    self.kind.as_str()
                )));
            }
        }
        match self.kind {
            ModelKind::LogisticRegression => {
                logistic::LogisticConfig::from_spec(self)?;
            }
            ModelKind::Mlp => {
                mlp::MlpConfig::from_spec(self)?;
            }
            ModelKind::RandomForest => {
                tree::ForestConfig::from_spec(self)?;
            }
            ModelKind::GradientBoosting => {
                boost::BoostConfig::from_spec(self)?;
            }
        }
        Ok(())
    }

    /// Rough trained-parameter count, used as the "smaller model" tie-break.
    pub fn parameter_count(&self, n_features: usize) -> u64 {
        let d = n_features as u64;
        match self.kind {
            ModelKind::LogisticRegression => (d + 1) * N_CLASSES as u64,
            ModelKind::Mlp => {
                let cfg = mlp::MlpConfig::from_spec(self).unwrap_or_default();
                let u = cfg.hidden_units as u64;
                let l = cfg.hidden_layers as u64;
                d * u + u + (l - 1) * (u * u + u) + u * N_CLASSES as u64 + N_CLASSES as u64
            }
            ModelKind::RandomForest => {
                let cfg = tree::ForestConfig::from_spec(self).unwrap_or_default();
                cfg.n_trees as u64 * (1u64 << (cfg.max_depth as u64).min(16))
            }
            ModelKind::GradientBoosting => {
                let cfg = boost::BoostConfig::from_spec(self).unwrap_or_default();
                cfg.n_trees as u64 * N_CLASSES as u64 * (1u64 << (cfg.max_depth as u64).min(16))
            }
        }
    }

    /// Lexicographic hyperparameter comparison over the sorted name union;
    /// a missing name sorts before any present value.
    pub fn lexicographic_cmp(&self, other: &ModelSpec) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        let names: std::collections::BTreeSet<&String> = self
            .hyperparameters
            .keys()
            .chain(other.hyperparameters.keys())
            .collect();
        for name in names {
            let ord = match (
                self.hyperparameters.get(name),
                other.hyperparameters.get(name),
            ) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(*b),
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }
}

/// Learned parameters, one variant per model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic(logistic::LogisticParams),
    Mlp(mlp::MlpParams),
    Forest(tree::ForestParams),
    Boosting(boost::BoostParams),
}

/// Bookkeeping recorded during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub iterations_run: usize,
    /// Epoch whose weights were restored by early stopping, when used.
    pub early_stop_epoch: Option<usize>,
    pub final_loss: f64,
}

/// A trained classifier bound to its exact feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    /// Scaler the pipeline fitted upstream, carried for artifact completeness.
    pub scaler: Option<crate::fusion::ScalerParams>,
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("model serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("model deserialization failed: {e}")))
    }
}

fn check_training_table(table: &FeatureTable) -> Result<()> {
    table.validate()?;
    if table.n_rows() < 2 * N_CLASSES {
        return Err(Error::InvalidInput(format!(
            "training table has only {} rows",
            table.n_rows()
        )));
    }
    if table.n_cols() == 0 {
        return Err(Error::InvalidInput("training table has no columns".into()));
    }
    Ok(())
}

/// Fit `spec` on `table`. Features are expected standardized; labels must
/// cover the rows (they always do in a validated table).
pub fn train(spec: &ModelSpec, table: &FeatureTable) -> Result<TrainedModel> {
    spec.validate()?;
    check_training_table(table)?;
    let (params, metadata) = match spec.kind {
        ModelKind::LogisticRegression => logistic::train(spec, table)?,
        ModelKind::Mlp => mlp::train(spec, table)?,
        ModelKind::RandomForest => tree::train_forest(spec, table)?,
        ModelKind::GradientBoosting => boost::train(spec, table)?,
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_names: table.column_names.clone(),
        scaler: None,
        params,
        metadata,
    })
}

/// Per-row class probabilities. The table's columns must match the
/// model's feature list exactly, order included.
pub fn predict_proba(model: &TrainedModel, table: &FeatureTable) -> Result<Vec<[f64; 3]>> {
    if table.column_names != model.feature_names {
        return Err(Error::Schema(format!(
            "prediction columns {:?} do not match the model's {:?}",
            table.column_names, model.feature_names
        )));
    }
    table.validate()?;
    let rows: Vec<&[f64]> = table.rows.iter().map(|r| r.as_slice()).collect();
    Ok(match &model.params {
        ModelParams::Logistic(p) => logistic::predict_proba(p, &rows),
        ModelParams::Mlp(p) => mlp::predict_proba(p, &rows),
        ModelParams::Forest(p) => tree::predict_proba(p, &rows),
        ModelParams::Boosting(p) => boost::predict_proba(p, &rows),
    })
}

/// Hard labels by arg-max probability; probability ties pick the lowest
/// class code so prediction stays deterministic.
pub fn predict(model: &TrainedModel, table: &FeatureTable) -> Result<Vec<Condition>> {
    Ok(predict_proba(model, table)?
        .into_iter()
        .map(|p| argmax_class(&p))
        .collect())
}

pub(crate) fn argmax_class(probs: &[f64; 3]) -> Condition {
    let mut best = 0;
    for k in 1..3 {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    Condition::from_code(best).unwrap()
}

/// Numerically safe softmax over a logit slice.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Stratified train/test row indices over the table's labels.
///
/// Per-class train counts follow the largest-remainder rule against the
/// global train fraction, then each class is clamped to keep at least one
/// row on both sides. Selection within a class is a seeded shuffle;
/// returned indices are sorted ascending.
pub fn stratified_split_indices(
    labels: &[Condition],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label.code()].push(i);
    }
    let present: Vec<usize> = (0..3).filter(|&c| !by_class[c].is_empty()).collect();
    for &c in &present {
        if by_class[c].len() < 2 {
            return Err(Error::Split(format!(
                "class {} has {} row(s); need at least 2 to split",
                Condition::from_code(c).unwrap(),
                by_class[c].len()
            )));
        }
    }
    if present.is_empty() {
        return Err(Error::Split("no rows to split".into()));
    }

    // Largest-remainder apportionment of the global train target.
    let total: usize = labels.len();
    let target_train = (total as f64 * train_fraction).round() as usize;
    let mut train_counts: Vec<usize> = Vec::new();
    let mut remainders: Vec<(f64, usize)> = Vec::new();
    for (slot, &c) in present.iter().enumerate() {
        let exact = by_class[c].len() as f64 * train_fraction;
        train_counts.push(exact.floor() as usize);
        remainders.push((exact - exact.floor(), slot));
    }
    let assigned: usize = train_counts.iter().sum();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, slot) in remainders
        .iter()
        .take(target_train.saturating_sub(assigned))
    {
        train_counts[slot] += 1;
    }
    for (slot, &c) in present.iter().enumerate() {
        train_counts[slot] = train_counts[slot].clamp(1, by_class[c].len() - 1);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (slot, &c) in present.iter().enumerate() {
        let mut rows = by_class[c].clone();
        let mut rng = rng_for(seed, "split", &[c as u64]);
        for i in (1..rows.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            rows.swap(i, j);
        }
        train.extend_from_slice(&rows[..train_counts[slot]]);
        test.extend_from_slice(&rows[train_counts[slot]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified split returning materialized tables; see
/// [`stratified_split_indices`].
pub fn stratified_split(
    table: &FeatureTable,
    train_fraction: f64,
    seed: u64,
) -> Result<(FeatureTable, FeatureTable)> {
    table.validate()?;
    let (train, test) = stratified_split_indices(&table.labels, train_fraction, seed)?;
    Ok((table.subset(&train), table.subset(&test)))
}
