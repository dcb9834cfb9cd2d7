//! File formats and run configuration: raw waveforms, PGM frame streams,
//! feature-table CSV, dataset manifests, and the aggregated pipeline
//! config. Formats are bit-exact and dependency-free so any language can
//! parse them.

mod config;
mod frames;
mod manifest;
mod table;
mod waveform;

pub use config::{default_grids, PipelineConfig, PipelineConfigFile};
pub use frames::{read_frame_dir, write_frame_dir, FrameStreamMeta};
pub use manifest::{
    frames_dir_crc32, read_manifest, verify_manifest, write_manifest, DatasetManifest,
    SpecimenEntry, MANIFEST_SCHEMA_VERSION,
};
pub use table::{read_feature_table, write_feature_table, RESERVED_COLUMNS};
pub use waveform::{read_waveform, write_waveform, WaveformMeta};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Provenance block embedded in every JSON artifact (and in the `.meta.json`
/// sidecar of CSV artifacts): enough to reproduce the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactStamp {
    pub tool_version: String,
    /// FNV-1a 64 over the effective config's canonical JSON, hex.
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactStamp {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        ArtifactStamp {
            tool_version: crate::TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            seed,
        }
    }
}

/// FNV-1a 64 of a byte string, as a fixed-width hex string.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{hash:016x}")
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320), the checksum
/// stored in dataset manifests.
pub struct Crc32 {
    state: u32,
}

impl Crc32 {
    pub fn new() -> Self {
        Crc32 { state: 0xFFFF_FFFF }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
        let table = TABLE.get_or_init(|| {
            let mut t = [0u32; 256];
            for (i, entry) in t.iter_mut().enumerate() {
                let mut c = i as u32;
                for _ in 0..8 {
                    c = if c & 1 != 0 {
                        0xEDB8_8320 ^ (c >> 1)
                    } else {
                        c >> 1
                    };
                }
                *entry = c;
            }
            t
        });
        for &b in bytes {
            self.state = table[((self.state ^ b as u32) & 0xFF) as usize] ^ (self.state >> 8);
        }
    }

    pub fn finish(self) -> u32 {
        self.state ^ 0xFFFF_FFFF
    }
}

impl Default for Crc32 {
    fn default() -> Self {
        Self::new()
    }
}

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut c = Crc32::new();
    c.update(bytes);
    c.finish()
}

/// CRC-32 of a file's bytes, streamed.
pub fn crc32_file(path: &Path) -> Result<u32> {
    use std::io::Read;
    let mut file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut crc = Crc32::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if n == 0 {
            break;
        }
        crc.update(&buf[..n]);
    }
    Ok(crc.finish())
}

/// Write through a same-directory staging file, then atomically rename into
/// place, so readers never observe a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(&display, e))?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("invalid artifact path {display}")))?;
    let staging = parent.join(format!(".{file_name}.staging"));
    fs::write(&staging, bytes).map_err(|e| Error::io(staging.display().to_string(), e))?;
    fs::rename(&staging, path).map_err(|e| Error::io(&display, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::CorruptFile {
        path: path.display().to_string(),
        detail: format!("invalid JSON: {e}"),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Format(format!("serializing {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_known_vectors() {
        // Standard IEEE CRC-32 check values.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
        assert_eq!(crc32(b"The quick brown fox jumps over the lazy dog"), 0x414F_A339);
    }

    #[test]
    fn crc32_streaming_matches_oneshot() {
        let data: Vec<u8> = (0..=255u8).cycle().take(100_000).collect();
        let mut streamed = Crc32::new();
        for chunk in data.chunks(37) {
            streamed.update(chunk);
        }
        assert_eq!(streamed.finish(), crc32(&data));
    }

    #[test]
    fn atomic_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/dir/artifact.bin");
        write_atomic(&path, b"payload").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"payload");
        // No staging file left behind.
        let children: Vec<_> = std::fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(children.len(), 1);
    }

    #[test]
    fn fnv_hex_is_stable() {
        assert_eq!(fnv1a_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex(b"a"), fnv1a_hex(b"a"));
        assert_ne!(fnv1a_hex(b"a"), fnv1a_hex(b"b"));
    }
}
