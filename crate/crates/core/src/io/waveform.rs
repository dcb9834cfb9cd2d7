//! Raw AE waveform files: little-endian 32-bit floats (volts) with a JSON
//! sidecar carrying acquisition metadata.
//!
//! Samples are stored in single precision. Recordings whose samples are
//! f32-representable (the synthetic generator quantizes accordingly) round
//! trip bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::signal::AeRecording;
use crate::{Error, Result};

/// Sidecar `<stem>.meta.json` next to the `<stem>.f32` data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformMeta {
    pub sample_rate_hz: f64,
    pub specimen_id: String,
    pub start_time_s: f64,
    pub sample_count: usize,
}

fn sidecar_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("meta.json")
}

/// Write `<path>` (raw f32 LE) and its `<stem>.meta.json` sidecar.
pub fn write_waveform(path: &Path, recording: &AeRecording) -> Result<()> {
    recording.validate()?;
    let mut bytes = Vec::with_capacity(4 * recording.samples.len());
    for &v in &recording.samples {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    super::write_atomic(path, &bytes)?;

    let meta = WaveformMeta {
        sample_rate_hz: recording.sample_rate_hz,
        specimen_id: recording.specimen_id.clone(),
        start_time_s: recording.start_time_s,
        sample_count: recording.samples.len(),
    };
    super::write_json(&sidecar_path(path), &meta)
}

/// Read a waveform file and its sidecar back into a recording.
pub fn read_waveform(path: &Path) -> Result<AeRecording> {
    let meta: WaveformMeta = super::read_json(&sidecar_path(path))?;
    let bytes = super::read_bytes(path)?;
    if bytes.len() != 4 * meta.sample_count {
        return Err(Error::CorruptFile {
            path: path.display().to_string(),
            detail: format!(
                "{} bytes but sidecar declares {} samples ({} bytes)",
                bytes.len(),
                meta.sample_count,
                4 * meta.sample_count
            ),
        });
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::CorruptFile {
            path: path.display().to_string(),
            detail: format!("non-finite sample at index {i}"),
        });
    }
    AeRecording::new(
        meta.specimen_id,
        meta.sample_rate_hz,
        samples,
        meta.start_time_s,
    )
}
