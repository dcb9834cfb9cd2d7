//! Feature fusion: modality alignment, tabulation, ANOVA-based selection,
//! z-score standardization, and training-set augmentation.
//!
//! The fusion stages operate on [`FeatureTable`], a column-named matrix with
//! one row per (specimen, layer) observation. Selection and scaling are
//! always fitted on training rows only; augmentation appends synthetic rows
//! that are tagged via [`Provenance`] so downstream splits can prove that
//! evaluation data stays real.

mod anova;
mod augment;
mod scale;

pub use anova::{anova_components, anova_f, anova_table, select_top_features, AnovaComponents, AnovaResult};
pub use augment::{balance_classes, gaussian_perturb, smote_augment};
pub use scale::{zscore_apply, zscore_fit, ScalerParams};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ae::{layer_feature_names, AeLayerFeatures};
use crate::vision::{vision_feature_names, VisionLayerFeatures};
use crate::{Error, Result};

/// Build condition of a specimen. Codes are stable: 0, 1, 2 in declaration
/// order, matching the string forms used in CSV and JSON artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    NoHole,
    Hole3mm,
    Hole5mm,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::NoHole, Condition::Hole3mm, Condition::Hole5mm];

    pub fn code(self) -> usize {
        match self {
            Condition::NoHole => 0,
            Condition::Hole3mm => 1,
            Condition::Hole5mm => 2,
        }
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown condition code {code}")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NoHole => "NoHole",
            Condition::Hole3mm => "Hole3mm",
            Condition::Hole5mm => "Hole5mm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown condition {s:?}")))
    }

    /// Defect-vs-normal binarization: both hole sizes count as defective.
    pub fn is_defect(self) -> bool {
        !matches!(self, Condition::NoHole)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Origin of a table row. Only `Real` rows may enter evaluation splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Real,
    SyntheticSmote,
    SyntheticNoise,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::SyntheticSmote => "synthetic-smote",
            Provenance::SyntheticNoise => "synthetic-noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Provenance::Real),
            "synthetic-smote" => Ok(Provenance::SyntheticSmote),
            "synthetic-noise" => Ok(Provenance::SyntheticNoise),
            other => Err(Error::Format(format!("unknown provenance {other:?}"))),
        }
    }

    pub fn is_synthetic(self) -> bool {
        !matches!(self, Provenance::Real)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sensor modality a feature column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ae,
    Vision,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ae => "ae",
            Modality::Vision => "vision",
        }
    }
}

/// Classify a column name by membership in the fixed feature catalogs.
pub fn column_modality(name: &str) -> Option<Modality> {
    static SETS: std::sync::OnceLock<(HashSet<&'static str>, HashSet<&'static str>)> =
        std::sync::OnceLock::new();
    let (ae, vision) = SETS.get_or_init(|| {
        let ae = layer_feature_names().iter().map(String::as_str).collect();
        let vision = vision_feature_names().iter().map(String::as_str).collect();
        (ae, vision)
    });
    if ae.contains(name) {
        Some(Modality::Ae)
    } else if vision.contains(name) {
        Some(Modality::Vision)
    } else {
        None
    }
}

/// One aligned (specimen, layer) observation carrying both modalities.
#[derive(Debug, Clone)]
pub struct LayerSample {
    pub specimen_id: String,
    pub condition: Condition,
    /// 1-based deposition order; the transient first layer is never emitted.
    pub layer_index: usize,
    pub ae: AeLayerFeatures,
    pub vision: VisionLayerFeatures,
}

/// Per-specimen extraction output prior to alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecimenFeatures {
    pub specimen_id: String,
    pub condition: Condition,
    pub ae_layers: Vec<AeLayerFeatures>,
    pub vision_layers: Vec<VisionLayerFeatures>,
}

/// Pair AE and vision layers per specimen and drop the first layer.
///
/// Both modalities must have segmented the same layer indices; a count or
/// index mismatch for any specimen aborts the whole alignment. The first
/// deposited layer is discarded as a thermal transient, so a five-layer
/// build yields samples for layers 2 through 5.
pub fn align_modalities(specimens: &[SpecimenFeatures]) -> Result<Vec<LayerSample>> {
    let mut samples = Vec::new();
    for spec in specimens {
        if spec.ae_layers.len() != spec.vision_layers.len() {
            return Err(Error::Alignment {
                specimen: spec.specimen_id.clone(),
                ae_layers: spec.ae_layers.len(),
                vision_layers: spec.vision_layers.len(),
            });
        }
        if spec.ae_layers.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "specimen {}: need at least 2 layers to drop the transient first layer, got {}",
                spec.specimen_id,
                spec.ae_layers.len()
            )));
        }
        for (ae, vision) in spec.ae_layers.iter().zip(&spec.vision_layers) {
            if ae.layer_index != vision.layer_index {
                return Err(Error::Alignment {
                    specimen: spec.specimen_id.clone(),
                    ae_layers: spec.ae_layers.len(),
                    vision_layers: spec.vision_layers.len(),
                });
            }
        }
        let min_layer = spec.ae_layers.iter().map(|l| l.layer_index).min().unwrap();
        for (ae, vision) in spec.ae_layers.iter().zip(&spec.vision_layers) {
            if ae.layer_index == min_layer {
                continue;
            }
            samples.push(LayerSample {
                specimen_id: spec.specimen_id.clone(),
                condition: spec.condition,
                layer_index: ae.layer_index,
                ae: ae.clone(),
                vision: vision.clone(),
            });
        }
    }
    Ok(samples)
}

/// Column-named feature matrix with per-row label, layer, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Condition>,
    pub layer_indices: Vec<usize>,
    pub specimen_ids: Vec<String>,
    pub provenance: Vec<Provenance>,
}

impl FeatureTable {
    pub fn empty(column_names: Vec<String>) -> Self {
        FeatureTable {
            column_names,
            rows: Vec::new(),
            labels: Vec::new(),
            layer_indices: Vec::new(),
            specimen_ids: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    /// Row counts per condition in `Condition::ALL` order.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for &label in &self.labels {
            counts[label.code()] += 1;
        }
        counts
    }

    /// Structural invariants: unique column names, rectangular shape,
    /// parallel metadata arrays, finite values.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in &self.column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {name:?}")));
            }
        }
        let n = self.rows.len();
        if self.labels.len() != n
            || self.layer_indices.len() != n
            || self.specimen_ids.len() != n
            || self.provenance.len() != n
        {
            return Err(Error::Schema(format!(
                "metadata arrays out of step: {} rows, {} labels, {} layers, {} specimens, {} provenance",
                n,
                self.labels.len(),
                self.layer_indices.len(),
                self.specimen_ids.len(),
                self.provenance.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.column_names.len() {
                return Err(Error::Schema(format!(
                    "row {i} has {} values for {} columns",
                    row.len(),
                    self.column_names.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "non-finite value in row {i}, column {:?}",
                    self.column_names[j]
                )));
            }
        }
        Ok(())
    }

    /// New table with the rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            column_names: self.column_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            layer_indices: indices.iter().map(|&i| self.layer_indices[i]).collect(),
            specimen_ids: indices.iter().map(|&i| self.specimen_ids[i].clone()).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// New table keeping only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let indices: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Schema(format!("missing column {n:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            column_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| indices.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
            layer_indices: self.layer_indices.clone(),
            specimen_ids: self.specimen_ids.clone(),
            provenance: self.provenance.clone(),
        })
    }

    /// Indices of rows with `Real` provenance.
    pub fn real_row_indices(&self) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.provenance[i] == Provenance::Real)
            .collect()
    }
}

/// Tabulate aligned layer samples into a single fused table.
///
/// Columns are the 144 AE layer aggregates followed by the 16 vision
/// aggregates; every emitted row is tagged `Provenance::Real`.
pub fn to_feature_table(samples: &[LayerSample]) -> Result<FeatureTable> {
    let mut columns: Vec<String> = layer_feature_names().to_vec();
    columns.extend(vision_feature_names().iter().cloned());
    let mut table = FeatureTable::empty(columns);
    for s in samples {
        if s.ae.values.len() != layer_feature_names().len()
            || s.vision.values.len() != vision_feature_names().len()
        {
            return Err(Error::InvalidInput(format!(
                "specimen {} layer {}: feature vector lengths {} + {} do not match catalogs",
                s.specimen_id,
                s.layer_index,
                s.ae.values.len(),
                s.vision.values.len()
            )));
        }
        let mut row = Vec::with_capacity(table.n_cols());
        row.extend_from_slice(&s.ae.values);
        row.extend_from_slice(&s.vision.values);
        table.rows.push(row);
        table.labels.push(s.condition);
        table.layer_indices.push(s.layer_index);
        table.specimen_ids.push(s.specimen_id.clone());
        table.provenance.push(Provenance::Real);
    }
    table.validate()?;
    Ok(table)
}

/// Knobs for the fusion stage. Defaults mirror the reference workflow:
/// 20 AE + 8 vision features, an 85/15 stratified split performed before
/// any augmentation, and a doubling of the training set via one Gaussian
/// copy per real row plus SMOTE top-up to the largest class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub top_k_ae: usize,
    pub top_k_vision: usize,
    pub train_fraction: f64,
    pub smote_k: usize,
    pub noise_fraction: f64,
    pub gaussian_copies: usize,
    /// Augment before splitting (the published workflow) instead of the
    /// default leak-free split-first order.
    pub paper_order: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            top_k_ae: 20,
            top_k_vision: 8,
            train_fraction: 0.85,
            smote_k: 5,
            noise_fraction: 0.05,
            gaussian_copies: 1,
            paper_order: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k_ae == 0 || self.top_k_vision == 0 {
            return Err(Error::Config("top_k_ae and top_k_vision must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.smote_k == 0 {
            return Err(Error::Config("smote_k must be >= 1".into()));
        }
        if !(self.noise_fraction > 0.0 && self.noise_fraction.is_finite()) {
            return Err(Error::Config(format!(
                "noise_fraction must be positive and finite, got {}",
                self.noise_fraction
            )));
        }
        Ok(())
    }
}
