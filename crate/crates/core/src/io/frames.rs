//! Frame-stream directories: one 16-bit binary PGM per frame plus a
//! `stream.meta.json` sidecar.
//!
//! PGM (`P5`, maxval 65535) stores pixels big-endian per the format's
//! convention. Frames are named `frame_000000.pgm`, `frame_000001.pgm`, ...
//! and timestamps are reconstructed as `t0 + i/fps`, so a uniformly
//! sampled stream round trips exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::vision::{Frame, FrameStream};
use crate::{Error, Result};

pub const STREAM_META_FILE: &str = "stream.meta.json";

/// Sidecar describing every frame in the directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameStreamMeta {
    pub fps: f64,
    pub pixel_size_um: f64,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub t0_s: f64,
}

fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:06}.pgm"))
}

fn corrupt(dir: &Path, detail: impl Into<String>) -> Error {
    Error::CorruptStream {
        path: dir.display().to_string(),
        detail: detail.into(),
    }
}

fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(32 + 2 * frame.pixels.len());
    bytes.extend_from_slice(format!("P5\n{} {}\n65535\n", frame.width, frame.height).as_bytes());
    for &p in &frame.pixels {
        bytes.extend_from_slice(&p.to_be_bytes());
    }
    bytes
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let corrupt = |detail: String| Error::CorruptStream {
        path: path.display().to_string(),
        detail,
    };
    // Header: three whitespace-separated tokens after the magic, then a
    // single whitespace byte before the payload.
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(bytes)? != "P5" {
        return Err(corrupt("not a binary PGM (missing P5 magic)".into()));
    }
    let width: usize = token(bytes)?
        .parse()
        .map_err(|e| corrupt(format!("bad width: {e}")))?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|e| corrupt(format!("bad height: {e}")))?;
    let maxval: usize = token(bytes)?
        .parse()
        .map_err(|e| corrupt(format!("bad maxval: {e}")))?;
    if maxval != 65535 {
        return Err(corrupt(format!("maxval {maxval}, expected 65535")));
    }
    pos += 1; // The single whitespace byte separating header and payload.

    let expected = 2 * width * height;
    let payload = bytes
        .get(pos..)
        .filter(|p| p.len() == expected)
        .ok_or_else(|| {
            corrupt(format!(
                "payload is {} bytes, expected {expected}",
                bytes.len().saturating_sub(pos)
            ))
        })?;
    let pixels = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, pixels))
}

/// Write every frame of the stream into `dir` plus the metadata sidecar.
pub fn write_frame_dir(dir: &Path, stream: &FrameStream) -> Result<()> {
    stream.validate()?;
    let first = &stream.frames[0];
    for (i, frame) in stream.frames.iter().enumerate() {
        if frame.width != first.width || frame.height != first.height {
            return Err(Error::InvalidInput(format!(
                "stream {}: frame {i} is {}x{}, stream started {}x{}",
                stream.specimen_id, frame.width, frame.height, first.width, first.height
            )));
        }
        super::write_atomic(&frame_path(dir, i), &encode_pgm(frame))?;
    }
    let meta = FrameStreamMeta {
        fps: stream.fps(),
        pixel_size_um: first.pixel_size_um,
        width: first.width,
        height: first.height,
        frame_count: stream.frames.len(),
        t0_s: first.timestamp_s,
    };
    super::write_json(&dir.join(STREAM_META_FILE), &meta)
}

/// Read a frame directory back into a stream.
///
/// The specimen id is not part of the on-disk format; it comes from the
/// manifest entry (or the directory name for ad-hoc loads).
pub fn read_frame_dir(dir: &Path, specimen_id: &str) -> Result<FrameStream> {
    let meta: FrameStreamMeta = super::read_json(&dir.join(STREAM_META_FILE))?;
    if !(meta.fps > 0.0) {
        return Err(corrupt(dir, format!("non-positive fps {}", meta.fps)));
    }

    let mut indices = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_prefix("frame_").and_then(|s| s.strip_suffix(".pgm")) {
            let index: usize = stem
                .parse()
                .map_err(|_| corrupt(dir, format!("unparseable frame name {name:?}")))?;
            indices.push(index);
        }
    }
    indices.sort_unstable();
    if indices.len() != meta.frame_count {
        return Err(corrupt(
            dir,
            format!(
                "{} frame files but sidecar declares {}",
                indices.len(),
                meta.frame_count
            ),
        ));
    }
    if let Some(gap) = indices.iter().enumerate().find(|(i, &idx)| *i != idx) {
        return Err(corrupt(
            dir,
            format!("frame indices not contiguous: expected {}, found {}", gap.0, gap.1),
        ));
    }

    let frames = crate::parallel::try_map_indices(meta.frame_count, |i| {
        let path = frame_path(dir, i);
        let bytes = super::read_bytes(&path)?;
        let (width, height, pixels) = decode_pgm(&path, &bytes)?;
        if width != meta.width || height != meta.height {
            return Err(corrupt(
                dir,
                format!(
                    "frame {i} is {width}x{height}, sidecar declares {}x{}",
                    meta.width, meta.height
                ),
            ));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            timestamp_s: meta.t0_s + i as f64 / meta.fps,
            pixel_size_um: meta.pixel_size_um,
        })
    })?;

    let stream = FrameStream {
        specimen_id: specimen_id.to_string(),
        frames,
    };
    stream.validate()?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_stream(n: usize) -> FrameStream {
        let frames = (0..n)
            .map(|i| Frame {
                width: 128,
                height: 128,
                pixels: (0..128 * 128)
                    .map(|p| ((p * 5 + i * 31) % 65536) as u16)
                    .collect(),
                timestamp_s: i as f64 / 30.0,
                pixel_size_um: 4.5,
            })
            .collect();
        FrameStream {
            specimen_id: "grad".into(),
            frames,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let stream = gradient_stream(5);
        write_frame_dir(dir.path(), &stream).unwrap();
        let back = read_frame_dir(dir.path(), "grad").unwrap();
        assert_eq!(back.frames.len(), 5);
        for (a, b) in back.frames.iter().zip(&stream.frames) {
            assert_eq!(a.pixels, b.pixels);
            assert_eq!(a.timestamp_s, b.timestamp_s);
        }
    }

    #[test]
    fn header_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        write_frame_dir(dir.path(), &gradient_stream(2)).unwrap();
        let bytes = std::fs::read(dir.path().join("frame_000000.pgm")).unwrap();
        let header = b"P5\n128 128\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 32_768);
    }

    #[test]
    fn missing_frame_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_frame_dir(dir.path(), &gradient_stream(10)).unwrap();
        std::fs::remove_file(dir.path().join("frame_000003.pgm")).unwrap();
        assert!(matches!(
            read_frame_dir(dir.path(), "grad"),
            Err(Error::CorruptStream { .. })
        ));
    }

    #[test]
    fn header_mismatch_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_frame_dir(dir.path(), &gradient_stream(2)).unwrap();
        let path = dir.path().join("frame_000001.pgm");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[1] = b'6'; // P5 -> P6
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_frame_dir(dir.path(), "grad"),
            Err(Error::CorruptStream { .. })
        ));
    }
}
