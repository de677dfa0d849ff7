//! Per-utterance feature files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LFBE"
//! 4       4     u32 format version (1)
//! 8       4     u32 D (feature dims)
//! 12      4     u32 T (frames)
//! 16      8     f64 frame hop in seconds
//! 24      1     u8 dim label (0 = mel-bin, 1 = stacked)
//! 25      4·D·T f32 values, row-major D × T (row d holds frames 0..T)
//! ```

use std::fs;
use std::path::Path;

use super::{DimLabel, Spectrogram};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"LFBE";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 25;

pub fn encode_features(s: &Spectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * s.dims() * s.frames());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(s.dims() as u32).to_le_bytes());
    out.extend_from_slice(&(s.frames() as u32).to_le_bytes());
    out.extend_from_slice(&s.frame_hop().to_le_bytes());
    out.push(match s.dim_label() {
        DimLabel::MelBin => 0,
        DimLabel::Stacked => 1,
    });
    for d in 0..s.dims() {
        for t in 0..s.frames() {
            out.extend_from_slice(&(s.get(d, t) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<Spectrogram> {
    let malformed = |offset: usize, reason: &str| Error::Malformed {
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let dims = u32_at(8) as usize;
    let frames = u32_at(12) as usize;
    let hop = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let label = match bytes[24] {
        0 => DimLabel::MelBin,
        1 => DimLabel::Stacked,
        _ => return Err(malformed(24, "unknown dim label")),
    };
    let body = &bytes[HEADER_LEN..];
    let want = 4 * dims * frames;
    if body.len() < want {
        return Err(malformed(bytes.len(), "truncated body"));
    }
    if body.len() > want {
        return Err(malformed(HEADER_LEN + want, "trailing bytes"));
    }
    let mut values = vec![0.0; dims * frames];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let (d, t) = (i / frames, i % frames);
        values[t * dims + d] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Spectrogram::new(dims, frames, values, hop, label)
}

pub fn write_feature_file(path: &Path, s: &Spectrogram) -> Result<()> {
    fs::write(path, encode_features(s)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<Spectrogram> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
