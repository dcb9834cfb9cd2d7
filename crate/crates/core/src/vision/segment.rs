//! Frame-stream layer detection and per-frame melt-pool segmentation.

use crate::{Error, Result};

use super::{Frame, FrameStream, VisionSegmentationConfig};

/// Trimmed frame range of one layer, `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerRangeVision {
    pub layer_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Detected layers: raw active ranges, the trimmed ranges used downstream,
/// and non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct VisionSegmentation {
    /// Untrimmed active frame ranges, `[start, end)` per layer.
    pub intervals: Vec<(usize, usize)>,
    pub ranges: Vec<LayerRangeVision>,
    pub warnings: Vec<String>,
}

/// Detect active layers from per-frame mean intensity.
///
/// The active level is estimated as the mean intensity over frames brighter
/// than the stream median; frames below `quiet_fraction` of that level are
/// quiet. Interior quiet runs strictly longer than `min_quiet_duration_s`
/// separate layers, and edge-touching quiet runs never join a layer. Head
/// and tail trims are applied to each detected range.
pub fn detect_layers_vision(
    stream: &FrameStream,
    config: &VisionSegmentationConfig,
) -> Result<VisionSegmentation> {
    stream.validate()?;
    config.validate()?;
    let n = stream.frames.len();
    let fps = stream.fps();

    let means: Vec<f64> = crate::parallel::map_slice(&stream.frames, Frame::mean_intensity);
    let mut sorted = means.clone();
    let median = crate::ae::median_in_place(&mut sorted);
    // Frames strictly brighter than the median estimate the active level;
    // when the bright level is exactly the median (constant-intensity
    // streams) fall back to at-least-median frames.
    let mut above: Vec<f64> = means.iter().copied().filter(|&m| m > median).collect();
    if above.is_empty() {
        above = means.iter().copied().filter(|&m| m >= median).collect();
    }
    let active_mean = above.iter().sum::<f64>() / above.len() as f64;
    if !(active_mean > 0.0) {
        return Err(Error::EmptyStream(format!(
            "stream {}: no active frames (all-dark stream)",
            stream.specimen_id
        )));
    }
    let quiet: Vec<bool> = means
        .iter()
        .map(|&m| m < config.quiet_fraction * active_mean)
        .collect();

    let separator_frames =
        (config.min_quiet_duration_s * fps + 1e-9).floor() as usize + 1;

    let mut intervals: Vec<(usize, usize)> = Vec::new();
    let mut cursor = 0usize;
    let mut current_start: Option<usize> = None;
    while cursor < n {
        let run_start = cursor;
        let is_quiet = quiet[cursor];
        while cursor < n && quiet[cursor] == is_quiet {
            cursor += 1;
        }
        let run_len = cursor - run_start;
        if is_quiet {
            let touches_edge = run_start == 0 || cursor == n;
            if run_len >= separator_frames || touches_edge {
                if let Some(start) = current_start.take() {
                    intervals.push((start, run_start));
                }
            }
        } else if current_start.is_none() {
            current_start = Some(run_start);
        }
    }
    if let Some(start) = current_start {
        intervals.push((start, n));
    }
    if intervals.is_empty() {
        return Err(Error::EmptyStream(format!(
            "stream {}: no active interval found",
            stream.specimen_id
        )));
    }

    let mut warnings = Vec::new();
    if intervals.len() < 2 {
        warnings.push(format!(
            "degenerate stream: only {} active layer detected in specimen {}",
            intervals.len(),
            stream.specimen_id
        ));
    }

    let head = (config.trim_head_s * fps).round() as usize;
    let tail = (config.trim_tail_s * fps).round() as usize;
    let mut ranges = Vec::with_capacity(intervals.len());
    for (i, &(start, end)) in intervals.iter().enumerate() {
        let layer_index = i + 1;
        if end - start < head + tail + 2 {
            return Err(Error::SegmentTooShort {
                layer: layer_index,
                detail: format!(
                    "{} frames leave fewer than 2 after trims ({}, {}) s at {fps:.1} fps",
                    end - start,
                    config.trim_head_s,
                    config.trim_tail_s
                ),
            });
        }
        ranges.push(LayerRangeVision {
            layer_index,
            start_frame: start + head,
            end_frame: end - tail,
        });
    }

    Ok(VisionSegmentation {
        intervals,
        ranges,
        warnings,
    })
}

/// Binary foreground mask of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Threshold at `threshold_fraction * max`, clean with morphological opening
/// then closing (square element), and keep the largest 8-connected component.
pub fn segment_melt_pool(frame: &Frame, config: &VisionSegmentationConfig) -> Mask {
    let (w, h) = (frame.width, frame.height);
    let max = frame.pixels.iter().copied().max().unwrap_or(0) as f64;
    let threshold = config.threshold_fraction * max;
    let mut data: Vec<bool> = frame
        .pixels
        .iter()
        .map(|&p| p as f64 >= threshold)
        .collect();

    let r = config.morph_radius_px;
    if r > 0 {
        data = erode(&data, w, h, r);
        data = dilate(&data, w, h, r);
        data = dilate(&data, w, h, r);
        data = erode(&data, w, h, r);
    }
    let data = largest_component(&data, w, h);
    Mask {
        width: w,
        height: h,
        data,
    }
}

/// Erosion by a (2r+1)-square; out-of-bounds neighbors are ignored so a
/// full-frame mask stays full instead of losing its border.
fn erode(data: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let ri = r as isize;
    let mut out = vec![false; data.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut keep = data[(y * w as isize + x) as usize];
            'scan: for dy in -ri..=ri {
                for dx in -ri..=ri {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if !data[(ny * w as isize + nx) as usize] {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            out[(y * w as isize + x) as usize] = keep;
        }
    }
    out
}

/// Dilation by a (2r+1)-square.
fn dilate(data: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let ri = r as isize;
    let mut out = vec![false; data.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut hit = false;
            'scan: for dy in -ri..=ri {
                for dx in -ri..=ri {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if data[(ny * w as isize + nx) as usize] {
                        hit = true;
                        break 'scan;
                    }
                }
            }
            out[(y * w as isize + x) as usize] = hit;
        }
    }
    out
}

/// Keep only the largest 8-connected foreground component (first one found
/// in scan order wins ties).
fn largest_component(data: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut label = vec![0u32; data.len()];
    let mut best_label = 0u32;
    let mut best_size = 0usize;
    let mut next = 1u32;
    let mut stack: Vec<usize> = Vec::new();
    for start in 0..data.len() {
        if !data[start] || label[start] != 0 {
            continue;
        }
        let this = next;
        next += 1;
        let mut size = 0usize;
        stack.push(start);
        label[start] = this;
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = (ny * w as isize + nx) as usize;
                    if data[q] && label[q] == 0 {
                        label[q] = this;
                        stack.push(q);
                    }
                }
            }
        }
        if size > best_size {
            best_size = size;
            best_label = this;
        }
    }
    label.iter().map(|&l| l != 0 && l == best_label).collect()
}
