//! End-to-end orchestration: dataset generation, feature extraction,
//! fusion, model search, ablation evaluation, and report rendering.
//!
//! Each stage is a thin composition of the domain modules so the CLI can
//! stay argument handling only. Every artifact a stage writes embeds an
//! [`ArtifactStamp`] or sits next to a `.meta.json` sidecar carrying one,
//! so any output can be traced back to {tool version, config hash, seed}.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ae::{layer_feature_names, process_recording};
use crate::fusion::{
    align_modalities, column_modality, to_feature_table, Condition, FeatureTable, Provenance,
    ScalerParams, SpecimenFeatures,
};
use crate::io::{
    self, read_waveform, write_feature_table, ArtifactStamp, DatasetManifest, PipelineConfig,
};
use crate::ml::{
    evaluate_ablation, grid_search, prepare_modality, train, AblationOutcome, GridSearchOutcome,
    MetricsReport, ModalityConfig, ModelKind, ModelSpec, PreparedData, TrainedModel,
};
use crate::rng::derive_seed;
use crate::signal::AeRecording;
use crate::synth::{dataset_plan, generate_dataset, generate_specimen};
use crate::vision::{process_stream, vision_feature_names, FrameStream};
use crate::{Error, Result};

pub const DATASET_DIR: &str = "dataset";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const AE_TABLE_FILE: &str = "ae_features.csv";
pub const VISION_TABLE_FILE: &str = "vision_features.csv";
pub const FUSED_TABLE_FILE: &str = "fused_features.csv";
pub const TRAIN_TABLE_FILE: &str = "train.csv";
pub const TEST_TABLE_FILE: &str = "test.csv";
pub const ANOVA_FILE: &str = "anova.csv";
pub const SELECTION_FILE: &str = "selected_features.json";
pub const TRAINING_FILE: &str = "training.json";
pub const MODELS_DIR: &str = "models";
pub const REPORTS_DIR: &str = "reports";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const FEATURE_SUMMARY_FILE: &str = "feature_summary.csv";

pub fn stamp_for(config: &PipelineConfig) -> Result<ArtifactStamp> {
    Ok(ArtifactStamp::new(config.hash()?, config.profile.seed))
}

/// Per-specimen feature sets plus accumulated extraction warnings.
#[derive(Debug, Clone)]
pub struct ExtractedDataset {
    pub specimens: Vec<SpecimenFeatures>,
    pub warnings: Vec<String>,
}

/// Run both modality pipelines over one specimen's raw data.
pub fn extract_specimen(
    recording: &AeRecording,
    stream: &FrameStream,
    condition: Condition,
    config: &PipelineConfig,
) -> Result<(SpecimenFeatures, Vec<String>)> {
    let (ae_layers, ae_warnings) =
        process_recording(recording, &config.ae_segmentation, &config.ae_features)?;
    let (vision_layers, vision_warnings) = process_stream(stream, &config.vision_segmentation)?;
    let id = &recording.specimen_id;
    let warnings = ae_warnings
        .into_iter()
        .chain(vision_warnings)
        .map(|w| format!("{id}: {w}"))
        .collect();
    let features = SpecimenFeatures {
        specimen_id: id.clone(),
        condition,
        ae_layers,
        vision_layers,
    };
    Ok((features, warnings))
}

/// Generate and extract the configured dataset without touching disk.
///
/// Specimens are processed one at a time and the raw data dropped as soon
/// as its features exist, so peak memory stays at a single specimen.
pub fn extract_from_memory(config: &PipelineConfig) -> Result<ExtractedDataset> {
    let plans = dataset_plan(&config.profile)?;
    let mut specimens = Vec::with_capacity(plans.len());
    let mut warnings = Vec::new();
    for plan in &plans {
        let (recording, stream, _) = generate_specimen(plan, &config.profile)?;
        let (features, w) = extract_specimen(&recording, &stream, plan.condition, config)?;
        specimens.push(features);
        warnings.extend(w);
    }
    Ok(ExtractedDataset {
        specimens,
        warnings,
    })
}

/// Extract features from a dataset already on disk, one specimen at a time.
pub fn extract_from_manifest(
    manifest: &DatasetManifest,
    root: &Path,
    config: &PipelineConfig,
) -> Result<ExtractedDataset> {
    let mut specimens = Vec::with_capacity(manifest.specimens.len());
    let mut warnings = Vec::new();
    for entry in &manifest.specimens {
        let recording = read_waveform(&root.join(&entry.ae_file))?;
        let stream = io::read_frame_dir(&root.join(&entry.frames_dir), &entry.id)?;
        let (features, w) = extract_specimen(&recording, &stream, entry.condition, config)?;
        specimens.push(features);
        warnings.extend(w);
    }
    Ok(ExtractedDataset {
        specimens,
        warnings,
    })
}

/// Per-layer AE feature rows for every extracted layer, first layer included.
/// The transient first layer is only dropped at fusion time.
pub fn ae_feature_table(specimens: &[SpecimenFeatures]) -> Result<FeatureTable> {
    let mut table = FeatureTable::empty(layer_feature_names().to_vec());
    for s in specimens {
        for layer in &s.ae_layers {
            table.rows.push(layer.values.clone());
            table.labels.push(s.condition);
            table.layer_indices.push(layer.layer_index);
            table.specimen_ids.push(s.specimen_id.clone());
            table.provenance.push(Provenance::Real);
        }
    }
    table.validate()?;
    Ok(table)
}

/// Per-layer vision feature rows for every extracted layer.
pub fn vision_feature_table(specimens: &[SpecimenFeatures]) -> Result<FeatureTable> {
    let mut table = FeatureTable::empty(vision_feature_names().to_vec());
    for s in specimens {
        for layer in &s.vision_layers {
            table.rows.push(layer.values.clone());
            table.labels.push(s.condition);
            table.layer_indices.push(layer.layer_index);
            table.specimen_ids.push(s.specimen_id.clone());
            table.provenance.push(Provenance::Real);
        }
    }
    table.validate()?;
    Ok(table)
}

/// Aligned multimodal table: both modalities paired per layer, first layer
/// dropped.
pub fn fused_table(specimens: &[SpecimenFeatures]) -> Result<FeatureTable> {
    let samples = align_modalities(specimens)?;
    to_feature_table(&samples)
}

/// Write a feature table plus a `.meta.json` stamp sidecar.
pub fn write_stamped_table(path: &Path, table: &FeatureTable, stamp: &ArtifactStamp) -> Result<()> {
    write_feature_table(path, table)?;
    io::write_json(&path.with_extension("meta.json"), stamp)
}

/// Write a rendered CSV plus a `.meta.json` stamp sidecar.
pub fn write_stamped_csv(path: &Path, content: &str, stamp: &ArtifactStamp) -> Result<()> {
    io::write_atomic(path, content.as_bytes())?;
    io::write_json(&path.with_extension("meta.json"), stamp)
}

/// Rebuild per-specimen feature sets from the two per-modality CSVs, the
/// inverse of [`ae_feature_table`] and [`vision_feature_table`].
///
/// Rows must be real (fusion inputs are always extracted, never
/// augmented) and a specimen's condition must agree across both tables.
/// Window and frame bookkeeping is not stored in the CSVs, so the
/// reconstructed layers carry zero counts; alignment never reads them.
pub fn specimens_from_tables(
    ae: &FeatureTable,
    vision: &FeatureTable,
) -> Result<Vec<SpecimenFeatures>> {
    ae.validate()?;
    vision.validate()?;
    if ae.column_names != *layer_feature_names() {
        return Err(Error::Schema(
            "AE table columns do not match the AE feature catalog".into(),
        ));
    }
    if vision.column_names != *vision_feature_names() {
        return Err(Error::Schema(
            "vision table columns do not match the vision feature catalog".into(),
        ));
    }

    let mut specimens: Vec<SpecimenFeatures> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut slot = |id: &str, condition: Condition,
                    specimens: &mut Vec<SpecimenFeatures>|
     -> Result<usize> {
        if let Some(&i) = index.get(id) {
            if specimens[i].condition != condition {
                return Err(Error::Schema(format!(
                    "specimen {id} labeled {} and {} in the two tables",
                    specimens[i].condition.as_str(),
                    condition.as_str()
                )));
            }
            return Ok(i);
        }
        index.insert(id.to_string(), specimens.len());
        specimens.push(SpecimenFeatures {
            specimen_id: id.to_string(),
            condition,
            ae_layers: Vec::new(),
            vision_layers: Vec::new(),
        });
        Ok(specimens.len() - 1)
    };

    for (i, row) in ae.rows.iter().enumerate() {
        if ae.provenance[i] != Provenance::Real {
            return Err(Error::Schema(format!(
                "AE table row {i} is {}; fusion inputs must be real rows",
                ae.provenance[i]
            )));
        }
        let at = slot(&ae.specimen_ids[i], ae.labels[i], &mut specimens)?;
        specimens[at].ae_layers.push(crate::ae::AeLayerFeatures {
            layer_index: ae.layer_indices[i],
            values: row.clone(),
            window_count: 0,
            skipped_windows: 0,
        });
    }
    for (i, row) in vision.rows.iter().enumerate() {
        if vision.provenance[i] != Provenance::Real {
            return Err(Error::Schema(format!(
                "vision table row {i} is {}; fusion inputs must be real rows",
                vision.provenance[i]
            )));
        }
        let at = slot(&vision.specimen_ids[i], vision.labels[i], &mut specimens)?;
        specimens[at]
            .vision_layers
            .push(crate::vision::VisionLayerFeatures {
                layer_index: vision.layer_indices[i],
                values: row.clone(),
                frame_count: 0,
                time_span_s: 0.0,
            });
    }
    Ok(specimens)
}

/// Read a previous `train` run's search artifact, `Ok(None)` when absent.
pub fn load_training(dir: &Path) -> Result<Option<TrainingArtifact>> {
    let path = dir.join(TRAINING_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    io::read_json(&path).map(Some)
}

/// ANOVA ranking as CSV, strongest discriminators first.
pub fn render_anova_csv(results: &[crate::fusion::AnovaResult]) -> String {
    let mut sorted: Vec<&crate::fusion::AnovaResult> = results.iter().collect();
    sorted.sort_by(|a, b| b.f.total_cmp(&a.f).then_with(|| a.name.cmp(&b.name)));
    let mut out = String::from("feature,modality,f,p\n");
    for r in sorted {
        let modality = column_modality(&r.name).map_or("unknown", |m| m.as_str());
        out.push_str(&format!("{},{modality},{},{}\n", r.name, r.f, r.p));
    }
    out
}

/// Model-by-modality metric grid as CSV, one row per evaluation cell.
pub fn render_comparison_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(
        "model,modality,accuracy,precision,recall,f1,macro_f1,auc_roc,runs,accuracy_mean,accuracy_std\n",
    );
    for r in reports {
        let model = r.model.map_or("unknown", |m| m.as_str());
        let modality = r.modality.map_or("unknown", |m| m.as_str());
        let (runs, mean, std) = match &r.run_stats {
            Some(s) => (
                s.n_runs.to_string(),
                s.mean_accuracy.to_string(),
                s.std_accuracy.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{model},{modality},{},{},{},{},{},{},{runs},{mean},{std}\n",
            r.accuracy, r.precision, r.recall, r.f1, r.macro_f1, r.auc_roc,
        ));
    }
    out
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Per-condition medians of every feature column over the real rows.
pub fn render_feature_summary_csv(table: &FeatureTable) -> Result<String> {
    table.validate()?;
    let mut out = String::from("feature,modality,median_nohole,median_hole3mm,median_hole5mm\n");
    for (col, name) in table.column_names.iter().enumerate() {
        let modality = column_modality(name).map_or("unknown", |m| m.as_str());
        let mut cells: [String; 3] = [String::new(), String::new(), String::new()];
        for (k, cell) in cells.iter_mut().enumerate() {
            let mut group: Vec<f64> = table
                .rows
                .iter()
                .zip(&table.labels)
                .zip(&table.provenance)
                .filter(|((_, &label), &prov)| label.code() == k && prov == Provenance::Real)
                .map(|((row, _), _)| row[col])
                .collect();
            if let Some(m) = median(&mut group) {
                *cell = m.to_string();
            }
        }
        out.push_str(&format!(
            "{name},{modality},{},{},{}\n",
            cells[0], cells[1], cells[2]
        ));
    }
    Ok(out)
}

/// Feature selection and scaler parameters fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub stamp: ArtifactStamp,
    pub selected: Vec<String>,
    pub scaler: ScalerParams,
}

/// Grid-search results for every model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingArtifact {
    pub stamp: ArtifactStamp,
    /// Keyed by model family, [`ModelKind::ALL`] order.
    pub searches: BTreeMap<ModelKind, GridSearchOutcome>,
}

impl TrainingArtifact {
    pub fn best_specs(&self) -> Vec<ModelSpec> {
        self.searches.values().map(|o| o.best.clone()).collect()
    }
}

/// One evaluation cell's metrics plus run provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub stamp: ArtifactStamp,
    pub report: MetricsReport,
}

/// A fitted model plus run provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub stamp: ArtifactStamp,
    pub model: TrainedModel,
}

/// The effective configuration a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigArtifact {
    pub stamp: ArtifactStamp,
    pub config: PipelineConfig,
}

/// Prepare the multimodal feature set and write the fusion artifacts:
/// prepared train/test tables, the ANOVA ranking, and the selection record.
pub fn run_fusion_stage(
    fused: &FeatureTable,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<PreparedData> {
    let stamp = stamp_for(config)?;
    let prepared = prepare_modality(
        fused,
        ModalityConfig::Multimodal,
        &config.fusion,
        config.profile.seed,
    )?;
    write_stamped_table(&out_dir.join(TRAIN_TABLE_FILE), &prepared.train, &stamp)?;
    write_stamped_table(&out_dir.join(TEST_TABLE_FILE), &prepared.test, &stamp)?;
    write_stamped_csv(
        &out_dir.join(ANOVA_FILE),
        &render_anova_csv(&prepared.anova),
        &stamp,
    )?;
    let selection = SelectionArtifact {
        stamp,
        selected: prepared.selected.clone(),
        scaler: prepared.scaler.clone(),
    };
    io::write_json(&out_dir.join(SELECTION_FILE), &selection)?;
    Ok(prepared)
}

/// Grid-search every model family on the prepared multimodal training
/// table, fit each family's best spec, and write the search and model
/// artifacts.
pub fn run_training_stage(
    fused: &FeatureTable,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<TrainingArtifact> {
    let stamp = stamp_for(config)?;
    let prepared = prepare_modality(
        fused,
        ModalityConfig::Multimodal,
        &config.fusion,
        config.profile.seed,
    )?;
    let mut searches = BTreeMap::new();
    for (i, (kind, grid)) in config.model_grids()?.into_iter().enumerate() {
        let seed = derive_seed(config.profile.seed, "grid-search", &[i as u64]);
        searches.insert(kind, grid_search(kind, &grid, &prepared.train, seed)?);
    }
    for (kind, outcome) in &searches {
        let mut model = train(&outcome.best, &prepared.train)?;
        model.scaler = Some(prepared.scaler.clone());
        let artifact = ModelArtifact {
            stamp: stamp.clone(),
            model,
        };
        io::write_json(
            &out_dir
                .join(MODELS_DIR)
                .join(format!("{}.json", kind.as_str())),
            &artifact,
        )?;
    }
    let artifact = TrainingArtifact { stamp, searches };
    io::write_json(&out_dir.join(TRAINING_FILE), &artifact)?;
    Ok(artifact)
}

fn report_file_name(report: &MetricsReport) -> String {
    format!(
        "{}_{}.json",
        report.model.map_or("unknown", |m| m.as_str()),
        report.modality.map_or("unknown", |m| m.as_str()),
    )
}

/// Run the modality ablation with `specs` (families without an entry use
/// defaults) and write one report JSON per cell plus the comparison CSV.
pub fn run_eval_stage(
    fused: &FeatureTable,
    specs: &[ModelSpec],
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<AblationOutcome> {
    let stamp = stamp_for(config)?;
    let outcome = evaluate_ablation(
        fused,
        specs,
        &config.fusion,
        config.mlp_seeds,
        config.profile.seed,
    )?;
    let reports_dir = out_dir.join(REPORTS_DIR);
    for report in &outcome.reports {
        let artifact = ReportArtifact {
            stamp: stamp.clone(),
            report: report.clone(),
        };
        io::write_json(&reports_dir.join(report_file_name(report)), &artifact)?;
    }
    write_stamped_csv(
        &out_dir.join(COMPARISON_FILE),
        &render_comparison_csv(&outcome.reports),
        &stamp,
    )?;
    Ok(outcome)
}

/// Render the comparison grid and per-condition feature medians as CSV.
pub fn run_report_stage(
    fused: &FeatureTable,
    reports: &[MetricsReport],
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    let stamp = stamp_for(config)?;
    write_stamped_csv(
        &out_dir.join(COMPARISON_FILE),
        &render_comparison_csv(reports),
        &stamp,
    )?;
    write_stamped_csv(
        &out_dir.join(FEATURE_SUMMARY_FILE),
        &render_feature_summary_csv(fused)?,
        &stamp,
    )
}

/// What a full pipeline run produced, for callers that print a summary.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub manifest: DatasetManifest,
    pub ae_rows: usize,
    pub vision_rows: usize,
    pub fused_rows: usize,
    pub training: TrainingArtifact,
    pub outcome: AblationOutcome,
    pub warnings: Vec<String>,
}

/// End to end: generate the dataset on disk, read it back, extract and
/// fuse features, search, evaluate, and render reports, all under
/// `out_dir`.
///
/// Extraction deliberately goes through the on-disk dataset rather than
/// the in-memory specimens so a pipeline run also exercises the file
/// formats it publishes.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineSummary> {
    config.validate()?;
    let stamp = stamp_for(config)?;
    let config_artifact = ConfigArtifact {
        stamp: stamp.clone(),
        config: config.clone(),
    };
    io::write_json(&out_dir.join(CONFIG_FILE), &config_artifact)?;

    let dataset_dir = out_dir.join(DATASET_DIR);
    let manifest = generate_dataset(&config.profile, stamp.clone(), &dataset_dir)?;
    let extracted = extract_from_manifest(&manifest, &dataset_dir, config)?;

    let ae = ae_feature_table(&extracted.specimens)?;
    write_stamped_table(&out_dir.join(AE_TABLE_FILE), &ae, &stamp)?;
    let vision = vision_feature_table(&extracted.specimens)?;
    write_stamped_table(&out_dir.join(VISION_TABLE_FILE), &vision, &stamp)?;
    let fused = fused_table(&extracted.specimens)?;
    write_stamped_table(&out_dir.join(FUSED_TABLE_FILE), &fused, &stamp)?;

    let prepared = run_fusion_stage(&fused, config, out_dir)?;
    let training = run_training_stage(&fused, config, out_dir)?;
    let outcome = run_eval_stage(&fused, &training.best_specs(), config, out_dir)?;
    run_report_stage(&fused, &outcome.reports, config, out_dir)?;

    let warnings: Vec<String> = extracted
        .warnings
        .into_iter()
        .chain(prepared.warnings)
        .chain(outcome.warnings.iter().cloned())
        .collect();
    Ok(PipelineSummary {
        manifest,
        ae_rows: ae.n_rows(),
        vision_rows: vision.n_rows(),
        fused_rows: fused.n_rows(),
        training,
        outcome,
        warnings,
    })
}

/// Read back the artifacts `report` needs from a previous run's directory.
pub fn load_reports(dir: &Path) -> Result<Vec<MetricsReport>> {
    let reports_dir = dir.join(REPORTS_DIR);
    let mut names = Vec::new();
    let entries = std::fs::read_dir(&reports_dir)
        .map_err(|e| Error::io(reports_dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(reports_dir.display().to_string(), e))?;
        let name = entry.file_name();
        if name.to_string_lossy().ends_with(".json") {
            names.push(entry.path());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no report JSON files in {}",
            reports_dir.display()
        )));
    }
    names
        .iter()
        .map(|path| io::read_json::<ReportArtifact>(path).map(|a| a.report))
        .collect()
}
