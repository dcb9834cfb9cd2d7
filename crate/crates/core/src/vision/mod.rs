//! Melt-pool vision pipeline: layer detection on frame streams, per-frame
//! segmentation, geometric descriptors, and per-layer aggregation.

mod geometry;
mod segment;

pub use geometry::{
    convex_hull, melt_pool_geometry, min_enclosing_circle, Circle, Hull, MeltPoolGeometry, Point,
};
pub use segment::{
    detect_layers_vision, segment_melt_pool, LayerRangeVision, Mask, VisionSegmentation,
};

use crate::{Error, Result};

/// One camera frame, row-major 16-bit intensities.
#[derive(Debug, Clone)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    pub timestamp_s: f64,
    pub pixel_size_um: f64,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if self.width * self.height != self.pixels.len() {
            return Err(Error::InvalidInput(format!(
                "frame shape {}x{} does not match {} pixels",
                self.width,
                self.height,
                self.pixels.len()
            )));
        }
        if !(self.pixel_size_um > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pixel size must be positive, got {}",
                self.pixel_size_um
            )));
        }
        Ok(())
    }

    pub fn mean_intensity(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// A timestamp-ordered sequence of frames from one specimen.
#[derive(Debug, Clone)]
pub struct FrameStream {
    pub specimen_id: String,
    pub frames: Vec<Frame>,
}

impl FrameStream {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::EmptyStream(format!(
                "stream {} has {} frames, need at least 2",
                self.specimen_id,
                self.frames.len()
            )));
        }
        for f in &self.frames {
            f.validate()?;
        }
        if !self
            .frames
            .windows(2)
            .all(|w| w[1].timestamp_s > w[0].timestamp_s)
        {
            return Err(Error::InvalidInput(format!(
                "stream {}: timestamps not strictly increasing",
                self.specimen_id
            )));
        }
        Ok(())
    }

    /// Nominal frame rate inferred from the first and last timestamps.
    pub fn fps(&self) -> f64 {
        let n = self.frames.len();
        (n - 1) as f64 / (self.frames[n - 1].timestamp_s - self.frames[0].timestamp_s)
    }
}

/// Layer-detection thresholds and trims for the frame stream.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionSegmentationConfig {
    /// Fraction of the active mean below which a frame counts as quiet.
    pub quiet_fraction: f64,
    /// Quiet runs strictly longer than this separate layers.
    pub min_quiet_duration_s: f64,
    /// Melt-pool threshold as a fraction of the frame maximum.
    pub threshold_fraction: f64,
    pub trim_head_s: f64,
    pub trim_tail_s: f64,
    /// Half-width of the square structuring element.
    pub morph_radius_px: usize,
}

impl Default for VisionSegmentationConfig {
    fn default() -> Self {
        VisionSegmentationConfig {
            quiet_fraction: 0.10,
            min_quiet_duration_s: 4.5,
            threshold_fraction: 0.80,
            trim_head_s: 10.0,
            trim_tail_s: 5.0,
            morph_radius_px: 1,
        }
    }
}

impl VisionSegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quiet_fraction > 0.0 && self.quiet_fraction < 1.0) {
            return Err(Error::Config(format!(
                "quiet_fraction must be in (0, 1), got {}",
                self.quiet_fraction
            )));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(Error::Config(format!(
                "threshold_fraction must be in (0, 1), got {}",
                self.threshold_fraction
            )));
        }
        for (name, v) in [
            ("min_quiet_duration_s", self.min_quiet_duration_s),
            ("trim_head_s", self.trim_head_s),
            ("trim_tail_s", self.trim_tail_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be a positive finite duration, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Names of the 7 per-frame geometry fields, in aggregation order.
pub const GEOMETRY_FIELD_NAMES: [&str; 7] = [
    "contour_area",
    "circle_radius",
    "circle_area",
    "core2circle_ratio",
    "convexity",
    "bbox_length",
    "bbox_width",
];

/// The 16 per-layer vision feature names: 7 fields x mean/std, then
/// frame_count and time_span_s.
pub fn vision_feature_names() -> &'static [String] {
    static NAMES: std::sync::OnceLock<Vec<String>> = std::sync::OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(16);
        for f in GEOMETRY_FIELD_NAMES {
            names.push(format!("{f}_mean"));
            names.push(format!("{f}_std"));
        }
        names.push("frame_count".into());
        names.push("time_span_s".into());
        names
    })
}

/// Per-layer aggregate of melt-pool geometry.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VisionLayerFeatures {
    pub layer_index: usize,
    /// 16 values ordered as `vision_feature_names()`.
    pub values: Vec<f64>,
    /// Valid frames that contributed.
    pub frame_count: usize,
    pub time_span_s: f64,
}

impl VisionLayerFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        vision_feature_names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Mean/std of each geometry field over the valid frames of one layer.
pub fn aggregate_layer_vision(
    layer_index: usize,
    geometries: &[MeltPoolGeometry],
    timestamps: &[f64],
) -> Result<VisionLayerFeatures> {
    if geometries.len() != timestamps.len() || timestamps.is_empty() {
        return Err(Error::InvalidInput(format!(
            "layer {layer_index}: {} geometries vs {} timestamps",
            geometries.len(),
            timestamps.len()
        )));
    }
    let valid: Vec<&MeltPoolGeometry> = geometries.iter().filter(|g| g.valid).collect();
    if valid.len() < 2 {
        return Err(Error::LayerExtraction {
            layer: layer_index,
            detail: format!(
                "{} valid frames out of {} (need at least 2)",
                valid.len(),
                geometries.len()
            ),
        });
    }
    let n = valid.len() as f64;
    let fields = |g: &MeltPoolGeometry| {
        [
            g.contour_area_um2,
            g.circle_radius_um,
            g.circle_area_um2,
            g.core2circle_ratio,
            g.convexity,
            g.bbox_length_um,
            g.bbox_width_um,
        ]
    };
    let mut values = Vec::with_capacity(16);
    for j in 0..7 {
        let first = fields(valid[0])[j];
        if valid.iter().all(|g| fields(g)[j] == first) {
            values.push(first);
            values.push(0.0);
            continue;
        }
        let mean = valid.iter().map(|g| fields(g)[j]).sum::<f64>() / n;
        let ss = valid
            .iter()
            .map(|g| (fields(g)[j] - mean).powi(2))
            .sum::<f64>();
        values.push(mean);
        values.push((ss / (n - 1.0)).sqrt());
    }
    let time_span_s = timestamps[timestamps.len() - 1] - timestamps[0];
    values.push(valid.len() as f64);
    values.push(time_span_s);
    Ok(VisionLayerFeatures {
        layer_index,
        values,
        frame_count: valid.len(),
        time_span_s,
    })
}

/// Run the full vision chain on one stream: detect and trim layers, segment
/// every frame, and aggregate geometry per layer.
pub fn process_stream(
    stream: &FrameStream,
    config: &VisionSegmentationConfig,
) -> Result<(Vec<VisionLayerFeatures>, Vec<String>)> {
    let segmentation = detect_layers_vision(stream, config)?;
    let layers = crate::parallel::try_map_slice(&segmentation.ranges, |range| {
        let frames = &stream.frames[range.start_frame..range.end_frame];
        let geoms: Vec<MeltPoolGeometry> = crate::parallel::map_slice(frames, |f| {
            let mask = segment_melt_pool(f, config);
            melt_pool_geometry(&mask, f.pixel_size_um)
        });
        let timestamps: Vec<f64> = frames.iter().map(|f| f.timestamp_s).collect();
        aggregate_layer_vision(range.layer_index, &geoms, &timestamps)
    })?;
    Ok((layers, segmentation.warnings))
}
