//! Dataset manifest: the root JSON document tying a generated dataset's
//! files, ground truth, and checksums together.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fusion::Condition;
use crate::synth::{GroundTruth, SynthProfile};
use crate::{Error, Result};

use super::{ArtifactStamp, Crc32};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One specimen's files and generation record. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecimenEntry {
    pub id: String,
    pub condition: Condition,
    pub ae_file: String,
    pub frames_dir: String,
    /// CRC-32 of the waveform data file's bytes.
    pub ae_crc32: u32,
    /// CRC-32 over every frame file's bytes in index order, then the
    /// stream sidecar's bytes: one checksum per directory instead of a
    /// thousand per-file entries.
    pub frames_crc32: u32,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub stamp: ArtifactStamp,
    pub profile: SynthProfile,
    pub specimens: Vec<SpecimenEntry>,
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    super::write_json(path, manifest)
}

/// Parse a manifest without touching the data files; `verify_manifest`
/// checks the files themselves.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = super::read_json(path)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::CorruptFile {
            path: path.display().to_string(),
            detail: format!(
                "schema version {} unsupported (this build reads {MANIFEST_SCHEMA_VERSION})",
                manifest.schema_version
            ),
        });
    }
    manifest.profile.validate()?;
    Ok(manifest)
}

/// Combined checksum of a frame directory, matching `frames_crc32`.
pub fn frames_dir_crc32(dir: &Path, frame_count: usize) -> Result<u32> {
    let mut crc = Crc32::new();
    for i in 0..frame_count {
        let path = dir.join(format!("frame_{i:06}.pgm"));
        crc.update(&super::read_bytes(&path)?);
    }
    crc.update(&super::read_bytes(&dir.join(super::frames::STREAM_META_FILE))?);
    Ok(crc.finish())
}

/// Check that every referenced file exists and matches its checksum, and
/// that ground-truth boundaries are consistent with the profile's timing.
pub fn verify_manifest(manifest: &DatasetManifest, root: &Path) -> Result<()> {
    for entry in &manifest.specimens {
        let ae_path = root.join(&entry.ae_file);
        if !ae_path.is_file() {
            return Err(Error::CorruptFile {
                path: ae_path.display().to_string(),
                detail: "referenced waveform file missing".into(),
            });
        }
        let ae_crc = super::crc32_file(&ae_path)?;
        if ae_crc != entry.ae_crc32 {
            return Err(Error::CorruptFile {
                path: ae_path.display().to_string(),
                detail: format!(
                    "checksum {ae_crc:08x} does not match manifest {:08x}",
                    entry.ae_crc32
                ),
            });
        }

        let frames_dir = root.join(&entry.frames_dir);
        if !frames_dir.is_dir() {
            return Err(Error::CorruptStream {
                path: frames_dir.display().to_string(),
                detail: "referenced frame directory missing".into(),
            });
        }
        let frames_crc = frames_dir_crc32(&frames_dir, manifest.profile.total_frames())?;
        if frames_crc != entry.frames_crc32 {
            return Err(Error::CorruptStream {
                path: frames_dir.display().to_string(),
                detail: format!(
                    "checksum {frames_crc:08x} does not match manifest {:08x}",
                    entry.frames_crc32
                ),
            });
        }

        let truth = &entry.ground_truth;
        if truth.layer_boundaries_s.len() != manifest.profile.layers {
            return Err(Error::CorruptFile {
                path: entry.id.clone(),
                detail: format!(
                    "ground truth has {} layers, profile declares {}",
                    truth.layer_boundaries_s.len(),
                    manifest.profile.layers
                ),
            });
        }
        for (l, &(start, end)) in truth.layer_boundaries_s.iter().enumerate() {
            let (want_start, want_end) = manifest.profile.active_interval_s(l);
            if (start - want_start).abs() > 1e-9 || (end - want_end).abs() > 1e-9 {
                return Err(Error::CorruptFile {
                    path: entry.id.clone(),
                    detail: format!(
                        "layer {l} boundaries ({start}, {end}) inconsistent with profile ({want_start}, {want_end})"
                    ),
                });
            }
        }
    }
    Ok(())
}
