//! Deterministic synthetic dataset generator.
//!
//! Produces AE recordings, frame streams, and exact ground truth for the
//! three build conditions so the full pipeline can be verified closed-loop.
//! This is deliberately not a physics simulation: condition signatures are
//! calibrated to reproduce qualitative feature orderings (burst-driven
//! kurtosis, modulation-driven energy spread, melt-pool shape and size
//! variability), never published absolute statistics.
//!
//! All randomness is counter-based: every layer, dwell gap, and frame owns
//! an RNG stream derived from (specimen seed, stream label, index), so
//! parallel generation is bit-identical to serial and any specimen can be
//! regenerated alone.

mod ae_gen;
mod frame_gen;

pub use frame_gen::PIXEL_SIZE_UM;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ae::{AeSegmentationConfig, WINDOW_LEN};
use crate::fusion::Condition;
use crate::io::{self, ArtifactStamp, DatasetManifest, SpecimenEntry};
use crate::rng::derive_seed;
use crate::signal::AeRecording;
use crate::vision::{FrameStream, VisionSegmentationConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Desk,
    PaperScale,
}

impl ProfileName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileName::Desk => "desk",
            ProfileName::PaperScale => "paper_scale",
        }
    }
}

impl std::fmt::Display for ProfileName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Timing and shape parameters of a generated dataset.
///
/// `desk` shrinks every duration roughly six-fold so the complete
/// 60-specimen pipeline runs in minutes; `paper_scale` keeps the
/// full-length 40 s layers and 5 s dwells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthProfile {
    pub name: ProfileName,
    pub sample_rate_hz: f64,
    pub fps: f64,
    pub layers: usize,
    pub layer_active_s: f64,
    pub dwell_s: f64,
    pub trim_head_s: f64,
    pub trim_tail_s: f64,
    pub min_quiet_duration_s: f64,
    pub frame_size_px: usize,
    pub specimens_per_condition: usize,
    pub seed: u64,
}

impl SynthProfile {
    pub fn desk(seed: u64) -> Self {
        SynthProfile {
            name: ProfileName::Desk,
            sample_rate_hz: 500_000.0,
            fps: 30.0,
            layers: 5,
            layer_active_s: 6.0,
            dwell_s: 1.5,
            trim_head_s: 1.0,
            trim_tail_s: 0.5,
            min_quiet_duration_s: 1.2,
            frame_size_px: 128,
            specimens_per_condition: 20,
            seed,
        }
    }

    pub fn paper_scale(seed: u64) -> Self {
        SynthProfile {
            name: ProfileName::PaperScale,
            sample_rate_hz: 500_000.0,
            fps: 30.0,
            layers: 5,
            layer_active_s: 40.0,
            dwell_s: 5.0,
            trim_head_s: 10.0,
            trim_tail_s: 5.0,
            min_quiet_duration_s: 4.5,
            frame_size_px: 128,
            specimens_per_condition: 20,
            seed,
        }
    }

    pub fn named(name: ProfileName, seed: u64) -> Self {
        match name {
            ProfileName::Desk => Self::desk(seed),
            ProfileName::PaperScale => Self::paper_scale(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("sample_rate_hz", self.sample_rate_hz),
            ("fps", self.fps),
            ("layer_active_s", self.layer_active_s),
            ("dwell_s", self.dwell_s),
            ("trim_head_s", self.trim_head_s),
            ("trim_tail_s", self.trim_tail_s),
            ("min_quiet_duration_s", self.min_quiet_duration_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "profile {field} must be positive and finite, got {v}"
                )));
            }
        }
        if self.layers < 2 {
            return Err(Error::Config(format!(
                "profile needs at least 2 layers (the first is dropped downstream), got {}",
                self.layers
            )));
        }
        if self.dwell_s <= self.min_quiet_duration_s {
            return Err(Error::Config(format!(
                "dwell_s ({}) must exceed min_quiet_duration_s ({}) or layers cannot separate",
                self.dwell_s, self.min_quiet_duration_s
            )));
        }
        let min_active =
            self.trim_head_s + self.trim_tail_s + 2.0 * WINDOW_LEN as f64 / self.sample_rate_hz;
        if self.layer_active_s <= min_active {
            return Err(Error::Config(format!(
                "layer_active_s ({}) too short for trims plus two feature windows ({min_active})",
                self.layer_active_s
            )));
        }
        if self.frame_size_px < 64 {
            return Err(Error::Config(format!(
                "frame_size_px must be at least 64, got {}",
                self.frame_size_px
            )));
        }
        if self.specimens_per_condition == 0 {
            return Err(Error::Config("specimens_per_condition must be >= 1".into()));
        }
        Ok(())
    }

    /// Exact `[start, end)` of one active phase in seconds. The recording
    /// starts mid-deposition: no lead-in or lead-out quiet.
    pub fn active_interval_s(&self, layer: usize) -> (f64, f64) {
        let start = layer as f64 * (self.layer_active_s + self.dwell_s);
        (start, start + self.layer_active_s)
    }

    pub fn total_duration_s(&self) -> f64 {
        self.layers as f64 * self.layer_active_s + (self.layers - 1) as f64 * self.dwell_s
    }

    pub fn total_samples(&self) -> usize {
        let active = (self.layer_active_s * self.sample_rate_hz).round() as usize;
        let dwell = (self.dwell_s * self.sample_rate_hz).round() as usize;
        self.layers * active + (self.layers - 1) * dwell
    }

    pub fn total_frames(&self) -> usize {
        (self.total_duration_s() * self.fps).round() as usize
    }

    /// AE segmentation parameters matched to this profile's timing.
    pub fn ae_segmentation(&self) -> AeSegmentationConfig {
        AeSegmentationConfig {
            min_quiet_duration_s: self.min_quiet_duration_s,
            trim_head_s: self.trim_head_s,
            trim_tail_s: self.trim_tail_s,
            ..AeSegmentationConfig::default()
        }
    }

    /// Vision segmentation parameters matched to this profile's timing.
    pub fn vision_segmentation(&self) -> VisionSegmentationConfig {
        VisionSegmentationConfig {
            min_quiet_duration_s: self.min_quiet_duration_s,
            trim_head_s: self.trim_head_s,
            trim_tail_s: self.trim_tail_s,
            ..VisionSegmentationConfig::default()
        }
    }

    /// Feature windows each trimmed layer should yield.
    pub fn expected_windows_per_layer(&self) -> usize {
        let stable_s = self.layer_active_s - self.trim_head_s - self.trim_tail_s;
        (stable_s * self.sample_rate_hz) as usize / WINDOW_LEN
    }
}

/// Per-condition generator parameters.
///
/// `burst_rate_hz` and `burst_amplitude_scale` set how many clamped burst
/// samples survive winsorization, which drives kurtosis.
/// `slow_modulation_std` spreads window energies within a layer.
/// The melt-pool fields set the thresholded blob's semi-major radius and
/// eccentricity distributions, which drive the circle radius spread and
/// the core-to-circle area ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSignature {
    pub burst_rate_hz: f64,
    /// Burst peak amplitude as a multiple of the active-phase RMS.
    pub burst_amplitude_scale: f64,
    pub slow_modulation_std: f64,
    pub melt_ellipse_eccentricity_mean: f64,
    pub melt_ellipse_eccentricity_std: f64,
    pub melt_radius_mean_px: f64,
    pub melt_radius_std_px: f64,
}

impl ConditionSignature {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("burst_rate_hz", self.burst_rate_hz),
            ("burst_amplitude_scale", self.burst_amplitude_scale),
            ("slow_modulation_std", self.slow_modulation_std),
            (
                "melt_ellipse_eccentricity_std",
                self.melt_ellipse_eccentricity_std,
            ),
            ("melt_radius_mean_px", self.melt_radius_mean_px),
            ("melt_radius_std_px", self.melt_radius_std_px),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "signature {field} must be positive and finite, got {v}"
                )));
            }
        }
        let e = self.melt_ellipse_eccentricity_mean;
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::Config(format!(
                "melt_ellipse_eccentricity_mean must lie in (0, 1), got {e}"
            )));
        }
        if self.slow_modulation_std >= 0.2 {
            return Err(Error::Config(format!(
                "slow_modulation_std {} would push dwell/active levels together",
                self.slow_modulation_std
            )));
        }
        Ok(())
    }
}

/// Default signatures indexed by condition code.
///
/// Calibrated so the extracted features order as: filtered kurtosis
/// 3mm > 5mm > none (burst rate); energy spread 5mm > none > 3mm
/// (modulation); core-to-circle ratio highest for 3mm (lowest
/// eccentricity); circle radius spread highest for none (radius std).
pub fn default_signatures() -> [ConditionSignature; 3] {
    [
        ConditionSignature {
            burst_rate_hz: 40.0,
            burst_amplitude_scale: 6.0,
            slow_modulation_std: 0.035,
            melt_ellipse_eccentricity_mean: 0.71,
            melt_ellipse_eccentricity_std: 0.06,
            melt_radius_mean_px: 20.0,
            melt_radius_std_px: 3.0,
        },
        ConditionSignature {
            burst_rate_hz: 160.0,
            burst_amplitude_scale: 6.0,
            slow_modulation_std: 0.020,
            melt_ellipse_eccentricity_mean: 0.39,
            melt_ellipse_eccentricity_std: 0.06,
            melt_radius_mean_px: 21.0,
            melt_radius_std_px: 1.2,
        },
        ConditionSignature {
            burst_rate_hz: 90.0,
            burst_amplitude_scale: 6.0,
            slow_modulation_std: 0.055,
            melt_ellipse_eccentricity_mean: 0.57,
            melt_ellipse_eccentricity_std: 0.06,
            melt_radius_mean_px: 22.0,
            melt_radius_std_px: 2.0,
        },
    ]
}

/// Exact generation record for one specimen; the reference that
/// closed-loop tests compare detected boundaries against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub specimen_id: String,
    pub condition: Condition,
    pub specimen_seed: u64,
    /// `[start, end)` of each active phase in seconds.
    pub layer_boundaries_s: Vec<(f64, f64)>,
    pub expected_windows_per_layer: usize,
}

/// One specimen's identity within a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenPlan {
    pub specimen_id: String,
    pub condition: Condition,
    /// 1-based index within the condition.
    pub index: usize,
    pub specimen_seed: u64,
}

pub fn condition_slug(condition: Condition) -> &'static str {
    match condition {
        Condition::NoHole => "nohole",
        Condition::Hole3mm => "hole3mm",
        Condition::Hole5mm => "hole5mm",
    }
}

/// The full dataset roster: `specimens_per_condition` specimens per
/// condition, each with its own derived seed, so any specimen can be
/// regenerated independently of the rest.
pub fn dataset_plan(profile: &SynthProfile) -> Result<Vec<SpecimenPlan>> {
    profile.validate()?;
    let mut plans = Vec::with_capacity(3 * profile.specimens_per_condition);
    for condition in Condition::ALL {
        for index in 1..=profile.specimens_per_condition {
            plans.push(SpecimenPlan {
                specimen_id: format!("{}-{:02}", condition_slug(condition), index),
                condition,
                index,
                specimen_seed: derive_seed(
                    profile.seed,
                    "specimen",
                    &[condition.code() as u64, index as u64],
                ),
            });
        }
    }
    Ok(plans)
}

/// Generate one specimen's AE recording, frame stream, and ground truth
/// using the default signature for its condition.
pub fn generate_specimen(
    plan: &SpecimenPlan,
    profile: &SynthProfile,
) -> Result<(AeRecording, FrameStream, GroundTruth)> {
    let signature = &default_signatures()[plan.condition.code()];
    generate_with_signature(plan, signature, profile)
}

/// Generate one specimen from an explicit signature (calibration hook).
pub fn generate_with_signature(
    plan: &SpecimenPlan,
    signature: &ConditionSignature,
    profile: &SynthProfile,
) -> Result<(AeRecording, FrameStream, GroundTruth)> {
    profile.validate()?;
    signature.validate()?;

    let samples = ae_gen::synthesize(profile, signature, plan.specimen_seed);
    let recording = AeRecording::new(
        plan.specimen_id.clone(),
        profile.sample_rate_hz,
        samples,
        0.0,
    )?;
    let frames = frame_gen::synthesize(profile, signature, plan.specimen_seed);
    let stream = FrameStream {
        specimen_id: plan.specimen_id.clone(),
        frames,
    };
    let truth = GroundTruth {
        specimen_id: plan.specimen_id.clone(),
        condition: plan.condition,
        specimen_seed: plan.specimen_seed,
        layer_boundaries_s: (0..profile.layers)
            .map(|l| profile.active_interval_s(l))
            .collect(),
        expected_windows_per_layer: profile.expected_windows_per_layer(),
    };
    Ok((recording, stream, truth))
}

/// Generate the full dataset under `out_dir` and write its manifest.
///
/// Layout: `<out_dir>/<specimen_id>/ae.f32` plus sidecar for the waveform,
/// `<out_dir>/<specimen_id>/frames/` for the stream, `manifest.json` at the
/// root, written last so a finished manifest implies finished data.
/// Specimens are generated one at a time; a desk specimen holds roughly
/// 180 MB of samples and frames, so streaming keeps memory flat while the
/// block and frame loops inside each specimen still parallelize.
pub fn generate_dataset(
    profile: &SynthProfile,
    stamp: ArtifactStamp,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let plans = dataset_plan(profile)?;
    let mut specimens = Vec::with_capacity(plans.len());
    for plan in &plans {
        let (recording, stream, ground_truth) = generate_specimen(plan, profile)?;
        let ae_file = format!("{}/ae.f32", plan.specimen_id);
        let frames_dir = format!("{}/frames", plan.specimen_id);
        let ae_path = out_dir.join(&ae_file);
        let frames_path = out_dir.join(&frames_dir);
        io::write_waveform(&ae_path, &recording)?;
        io::write_frame_dir(&frames_path, &stream)?;
        let frame_count = stream.frames.len();
        drop((recording, stream));
        specimens.push(SpecimenEntry {
            id: plan.specimen_id.clone(),
            condition: plan.condition,
            ae_file,
            frames_dir,
            ae_crc32: io::crc32_file(&ae_path)?,
            frames_crc32: io::frames_dir_crc32(&frames_path, frame_count)?,
            ground_truth,
        });
    }
    let manifest = DatasetManifest {
        schema_version: io::MANIFEST_SCHEMA_VERSION,
        stamp,
        profile: profile.clone(),
        specimens,
    };
    io::write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
