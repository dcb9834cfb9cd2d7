//! Acoustic-emission pipeline: layer segmentation of the continuous AE
//! stream, robust Winsorization, high-pass filtering, windowed feature
//! extraction, and per-layer aggregation.

mod features;
mod segment;
mod winsorize;

pub use features::{
    extract_layer_features, frequency_domain_features, layer_feature_names,
    time_domain_features, window_feature_names, AeFeatureConfig, AeLayerFeatures,
    AeWindowFeatures, FREQ_FEATURE_NAMES, TIME_FEATURE_NAMES, WINDOW_LEN,
};
pub use segment::{detect_layers_ae, trim_segment, AeInterval, AeSegmentation, LayerSegmentAE};
pub use winsorize::winsorize_mad;

pub(crate) use winsorize::median_in_place;

use crate::Result;

/// Segmentation thresholds and trim durations for the AE stream.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeSegmentationConfig {
    /// Envelope level (dB re 1 uV) below which a block counts as quiet.
    pub quiet_threshold_db: f64,
    /// Quiet runs strictly longer than this separate layers.
    pub min_quiet_duration_s: f64,
    /// RMS envelope block length.
    pub envelope_window_s: f64,
    /// Unstable head removed from each detected layer.
    pub trim_head_s: f64,
    /// Unstable tail removed from each detected layer.
    pub trim_tail_s: f64,
}

impl Default for AeSegmentationConfig {
    fn default() -> Self {
        AeSegmentationConfig {
            quiet_threshold_db: 30.0,
            min_quiet_duration_s: 4.5,
            envelope_window_s: 0.01,
            trim_head_s: 10.0,
            trim_tail_s: 5.0,
        }
    }
}

impl AeSegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_quiet_duration_s", self.min_quiet_duration_s),
            ("envelope_window_s", self.envelope_window_s),
            ("trim_head_s", self.trim_head_s),
            ("trim_tail_s", self.trim_tail_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(crate::Error::Config(format!(
                    "{name} must be a positive finite duration, got {v}"
                )));
            }
        }
        if !self.quiet_threshold_db.is_finite() {
            return Err(crate::Error::Config(format!(
                "quiet_threshold_db must be finite, got {}",
                self.quiet_threshold_db
            )));
        }
        Ok(())
    }
}

/// Run the full AE chain on one recording: detect layers, trim each, and
/// extract per-layer features. Returns the layer features together with any
/// segmentation warnings.
pub fn process_recording(
    recording: &crate::signal::AeRecording,
    seg: &AeSegmentationConfig,
    feat: &AeFeatureConfig,
) -> Result<(Vec<AeLayerFeatures>, Vec<String>)> {
    let segmentation = detect_layers_ae(recording, seg)?;
    let segments: Vec<LayerSegmentAE> = segmentation
        .intervals
        .iter()
        .map(|iv| trim_segment(iv, seg, recording.sample_rate_hz))
        .collect::<Result<_>>()?;
    let layers = crate::parallel::try_map_slice(&segments, |s| {
        extract_layer_features(recording, s, feat)
    })?;
    Ok((layers, segmentation.warnings))
}
