//! Aggregated run configuration: every tunable of the pipeline with
//! defaults derived from the chosen generation profile.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ae::{AeFeatureConfig, AeSegmentationConfig};
use crate::fusion::FusionConfig;
use crate::ml::{ModelKind, ParamGrid};
use crate::synth::{ProfileName, SynthProfile};
use crate::vision::VisionSegmentationConfig;
use crate::{Error, Result};

/// The effective, fully resolved configuration of one run. The dataset
/// seed lives in `profile.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub profile: SynthProfile,
    pub ae_segmentation: AeSegmentationConfig,
    pub ae_features: AeFeatureConfig,
    pub vision_segmentation: VisionSegmentationConfig,
    pub fusion: FusionConfig,
    /// Cross-validation grids keyed by model kind (snake_case names).
    pub grids: BTreeMap<String, ParamGrid>,
    /// Independent training repetitions averaged for the MLP report.
    pub mlp_seeds: usize,
}

/// On-disk form: everything optional, unset fields fall back to
/// profile-derived defaults at resolution time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfigFile {
    /// Named profile; ignored when `synth` is given explicitly.
    pub profile: Option<ProfileName>,
    pub seed: Option<u64>,
    /// Complete custom generation profile; overrides `profile`.
    pub synth: Option<SynthProfile>,
    pub ae_segmentation: Option<AeSegmentationConfig>,
    pub ae_features: Option<AeFeatureConfig>,
    pub vision_segmentation: Option<VisionSegmentationConfig>,
    pub fusion: Option<FusionConfig>,
    pub grids: Option<BTreeMap<String, ParamGrid>>,
    pub mlp_seeds: Option<usize>,
}

/// Small default search grids, each point inside its family's declared
/// hyperparameter ranges.
pub fn default_grids() -> BTreeMap<String, ParamGrid> {
    let mut grids = BTreeMap::new();
    grids.insert(
        ModelKind::LogisticRegression.as_str().to_string(),
        ParamGrid::new().add("c", vec![0.1.into(), 0.5.into(), 1.0.into()]),
    );
    grids.insert(
        ModelKind::Mlp.as_str().to_string(),
        ParamGrid::new().add("hidden_units", vec![32i64.into(), 64i64.into()]),
    );
    grids.insert(
        ModelKind::RandomForest.as_str().to_string(),
        ParamGrid::new().add("max_depth", vec![6i64.into(), 10i64.into()]),
    );
    grids.insert(
        ModelKind::GradientBoosting.as_str().to_string(),
        ParamGrid::new().add("regularized", vec![false.into(), true.into()]),
    );
    grids
}

impl PipelineConfig {
    /// Defaults for a named profile.
    pub fn for_profile(name: ProfileName, seed: u64) -> Self {
        Self::from_synth_profile(SynthProfile::named(name, seed))
    }

    /// Defaults with segmentation timing matched to the given profile.
    pub fn from_synth_profile(profile: SynthProfile) -> Self {
        PipelineConfig {
            ae_segmentation: profile.ae_segmentation(),
            ae_features: AeFeatureConfig::default(),
            vision_segmentation: profile.vision_segmentation(),
            fusion: FusionConfig::default(),
            grids: default_grids(),
            mlp_seeds: 5,
            profile,
        }
    }

    /// Resolve a config file plus command-line overrides into an effective
    /// config. `profile_override`/`seed_override` win over file values;
    /// any unset section falls back to the profile-derived default.
    pub fn resolve(
        file: PipelineConfigFile,
        profile_override: Option<ProfileName>,
        seed_override: Option<u64>,
    ) -> Result<PipelineConfig> {
        let seed = seed_override.or(file.seed);
        let mut profile = match (&file.synth, profile_override, file.profile) {
            (Some(custom), None, _) => custom.clone(),
            (Some(_), Some(_), _) => {
                return Err(Error::Config(
                    "--profile conflicts with the config file's explicit synth profile".into(),
                ))
            }
            (None, Some(name), _) | (None, None, Some(name)) => {
                SynthProfile::named(name, seed.unwrap_or(42))
            }
            (None, None, None) => SynthProfile::desk(seed.unwrap_or(42)),
        };
        if let Some(seed) = seed {
            profile.seed = seed;
        }

        let defaults = Self::from_synth_profile(profile.clone());
        let config = PipelineConfig {
            profile,
            ae_segmentation: file.ae_segmentation.unwrap_or(defaults.ae_segmentation),
            ae_features: file.ae_features.unwrap_or(defaults.ae_features),
            vision_segmentation: file
                .vision_segmentation
                .unwrap_or(defaults.vision_segmentation),
            fusion: file.fusion.unwrap_or(defaults.fusion),
            grids: file.grids.unwrap_or(defaults.grids),
            mlp_seeds: file.mlp_seeds.unwrap_or(defaults.mlp_seeds),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(
        path: &Path,
        profile_override: Option<ProfileName>,
        seed_override: Option<u64>,
    ) -> Result<PipelineConfig> {
        let file: PipelineConfigFile = super::read_json(path)?;
        Self::resolve(file, profile_override, seed_override)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.ae_segmentation.validate()?;
        self.ae_features.validate()?;
        self.vision_segmentation.validate()?;
        self.fusion.validate()?;
        if self.mlp_seeds == 0 {
            return Err(Error::Config("mlp_seeds must be >= 1".into()));
        }
        for (kind, grid) in self.model_grids()? {
            for spec in grid.points(kind, 0) {
                spec.validate()?;
            }
        }
        Ok(())
    }

    /// The grids parsed into model kinds, defaulting to an empty grid
    /// (all-defaults spec) for any family without an entry.
    pub fn model_grids(&self) -> Result<Vec<(ModelKind, ParamGrid)>> {
        let known: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
        for key in self.grids.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown model kind {key:?} in grids (expected one of {known:?})"
                )));
            }
        }
        Ok(ModelKind::ALL
            .iter()
            .map(|&kind| {
                let grid = self.grids.get(kind.as_str()).cloned().unwrap_or_default();
                (kind, grid)
            })
            .collect())
    }

    /// Stable hash of the effective configuration, embedded in artifacts.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)
            .map_err(|e| Error::Format(format!("hashing config: {e}")))?;
        Ok(super::fnv1a_hex(canonical.as_bytes()))
    }
}
