//! Layer boundary detection on the AE stream and stable-region trimming.

use crate::signal::{amplitude_db, AeRecording, AE_DB_REFERENCE_VOLTS};
use crate::{Error, Result};

use super::AeSegmentationConfig;

/// Untrimmed active interval, samples `[start, end)` of the recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AeInterval {
    pub layer_index: usize,
    pub start_sample: usize,
    pub end_sample: usize,
}

impl AeInterval {
    pub fn duration_s(&self, sample_rate_hz: f64) -> f64 {
        (self.end_sample - self.start_sample) as f64 / sample_rate_hz
    }
}

/// Trimmed stable region of one layer, samples `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSegmentAE {
    pub layer_index: usize,
    pub start_sample: usize,
    pub end_sample: usize,
}

/// Detected layers plus non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct AeSegmentation {
    pub intervals: Vec<AeInterval>,
    pub warnings: Vec<String>,
}

/// Detect active layers from the RMS envelope of the recording.
///
/// The envelope is the block RMS over consecutive `envelope_window_s` blocks
/// converted to dB re 1 uV. Interior quiet runs strictly longer than
/// `min_quiet_duration_s` separate layers; shorter interior lulls are kept
/// inside the surrounding layer. Quiet runs touching either edge of the
/// recording are lead-in/lead-out, not deposition, so they never join a
/// layer regardless of length.
pub fn detect_layers_ae(
    recording: &AeRecording,
    config: &AeSegmentationConfig,
) -> Result<AeSegmentation> {
    recording.validate()?;
    config.validate()?;

    let block_len = ((config.envelope_window_s * recording.sample_rate_hz).round() as usize).max(1);
    let n_blocks = recording.samples.len() / block_len;
    if n_blocks < 2 {
        return Err(Error::InvalidInput(format!(
            "recording too short for segmentation: {} samples < 2 envelope blocks of {}",
            recording.samples.len(),
            block_len
        )));
    }

    let quiet: Vec<bool> = crate::parallel::map_indices(n_blocks, |b| {
        let block = &recording.samples[b * block_len..(b + 1) * block_len];
        let rms = (block.iter().map(|x| x * x).sum::<f64>() / block.len() as f64).sqrt();
        amplitude_db(rms, AE_DB_REFERENCE_VOLTS) < config.quiet_threshold_db
    });

    // Smallest block count whose duration strictly exceeds the minimum;
    // the epsilon guards the division against 449.999... artifacts.
    let separator_blocks =
        (config.min_quiet_duration_s / config.envelope_window_s + 1e-9).floor() as usize + 1;

    // A quiet run separates layers when it is long enough or touches an edge.
    let mut intervals: Vec<AeInterval> = Vec::new();
    let mut cursor = 0usize;
    let mut current_start: Option<usize> = None;
    while cursor < n_blocks {
        let run_start = cursor;
        let is_quiet = quiet[cursor];
        while cursor < n_blocks && quiet[cursor] == is_quiet {
            cursor += 1;
        }
        let run_len = cursor - run_start;
        if is_quiet {
            let touches_edge = run_start == 0 || cursor == n_blocks;
            if run_len >= separator_blocks || touches_edge {
                if let Some(start) = current_start.take() {
                    intervals.push(AeInterval {
                        layer_index: intervals.len() + 1,
                        start_sample: start * block_len,
                        end_sample: run_start * block_len,
                    });
                }
            }
            // Short interior lull: stays inside the open interval.
        } else if current_start.is_none() {
            current_start = Some(run_start);
        }
    }
    if let Some(start) = current_start {
        intervals.push(AeInterval {
            layer_index: intervals.len() + 1,
            start_sample: start * block_len,
            end_sample: n_blocks * block_len,
        });
    }

    if intervals.is_empty() {
        return Err(Error::EmptySignal(
            "no active interval found in recording".into(),
        ));
    }
    let mut warnings = Vec::new();
    if intervals.len() < 2 {
        warnings.push(format!(
            "degenerate recording: only {} active layer detected in specimen {}",
            intervals.len(),
            recording.specimen_id
        ));
    }
    Ok(AeSegmentation {
        intervals,
        warnings,
    })
}

/// Remove the unstable head and tail of a detected interval.
///
/// The trimmed segment must still hold at least two analysis windows;
/// anything shorter cannot produce layer statistics.
pub fn trim_segment(
    interval: &AeInterval,
    config: &AeSegmentationConfig,
    sample_rate_hz: f64,
) -> Result<LayerSegmentAE> {
    config.validate()?;
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let head = (config.trim_head_s * sample_rate_hz).round() as usize;
    let tail = (config.trim_tail_s * sample_rate_hz).round() as usize;
    let len = interval.end_sample - interval.start_sample;
    let min_len = 2 * super::WINDOW_LEN;
    if len < head + tail + min_len {
        return Err(Error::SegmentTooShort {
            layer: interval.layer_index,
            detail: format!(
                "{:.3} s interval leaves fewer than {min_len} samples after trims ({}, {}) s",
                len as f64 / sample_rate_hz,
                config.trim_head_s,
                config.trim_tail_s
            ),
        });
    }
    Ok(LayerSegmentAE {
        layer_index: interval.layer_index,
        start_sample: interval.start_sample + head,
        end_sample: interval.end_sample - tail,
    })
}
