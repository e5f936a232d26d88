use std::path::Path;

use copyalign_tensor::Tensor;

use super::{read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;

pub const FEATURE_MAGIC: &[u8; 4] = b"VSFQ";
pub const FEATURE_VERSION: u16 = 1;

/// `magic, version u16, M u32, W u32, fps f32, M·W f32 (row-major), M f64 timestamps`.
pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let (m, w) = (seq.len(), seq.dim());
    let mut out = Vec::with_capacity(18 + 4 * m * w + 8 * m);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&seq.fps().to_le_bytes());
    for v in seq.frames().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in seq.timestamps() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes, path);
    if r.take(4)? != FEATURE_MAGIC {
        return Err(Error::format(path, "not a feature file (bad magic)"));
    }
    let version = r.u16()?;
    if version != FEATURE_VERSION {
        return Err(Error::format(path, format!("unsupported feature file version {version}")));
    }
    let m = r.u32()? as usize;
    let w = r.u32()? as usize;
    let fps = r.f32()?;
    let data = r.f32s(m * w)?;
    let timestamps = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    FeatureSequence::new(Tensor::new(&[m, w], data)?, timestamps, fps).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    write_bytes(path, &encode_features(seq))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    decode_features(&read_bytes(path)?, path)
}

/// One frame per non-empty line, comma-separated; frames are spaced `1/fps`.
pub fn read_features_csv(path: &Path, fps: f32) -> Result<FeatureSequence> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            line.split(',')
                .map(|v| v.trim().parse::<f32>().map_err(|e| Error::format(path, format!("line {}: {e}", n + 1))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSequence::from_rows(&rows, fps).map_err(|e| Error::format(path, e.to_string()))
}
