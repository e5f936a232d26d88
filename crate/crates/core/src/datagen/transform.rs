//! Temporal transformations that keep track of each frame's source index.

use std::fmt;

use copyalign_tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

/// Raw sequences are sampled at twice the working frame rate.
pub const RAW_FPS: f32 = 2.0;
pub const WORK_FPS: f32 = 1.0;
pub const MIN_RAW_FRAMES: usize = 8;
/// Largest number of frames a freeze repeats or a deletion removes.
pub const MAX_EDIT_FRAMES: usize = 4;
/// Target playback speeds, relative to the working frame rate.
pub const SPEED_GRID: [f64; 7] = [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];

/// Frames with the index of the source frame each one was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct TracedSequence {
    frames: FeatureSequence,
    origin_ids: Vec<usize>,
}

impl TracedSequence {
    /// Wraps a raw sequence; frame `i` has origin `i`.
    pub fn raw(frames: FeatureSequence) -> Self {
        let origin_ids = (0..frames.len()).collect();
        Self { frames, origin_ids }
    }

    pub fn frames(&self) -> &FeatureSequence {
        &self.frames
    }

    pub fn origin_ids(&self) -> &[usize] {
        &self.origin_ids
    }

    pub fn len(&self) -> usize {
        self.origin_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin_ids.is_empty()
    }

    /// New sequence made of the frames at `positions` (in order).
    fn select(&self, positions: &[usize], fps: f32) -> Result<Self> {
        let w = self.frames.dim();
        let mut data = Vec::with_capacity(positions.len() * w);
        for &p in positions {
            data.extend_from_slice(self.frames.row(p));
        }
        let frames = FeatureSequence::uniform(Tensor::new(&[positions.len(), w], data)?, fps)?;
        let origin_ids = positions.iter().map(|&p| self.origin_ids[p]).collect();
        Ok(Self { frames, origin_ids })
    }

    /// Keeps raw frames `floor(k * step)` for `k = 0, 1, ...`.
    pub fn resample(&self, step: f64) -> Result<Self> {
        if !(step >= 1.0) {
            return Err(Error::Config(format!("resample step must be >= 1, got {step}")));
        }
        let positions: Vec<usize> = (0..)
            .map(|k| (k as f64 * step + 1e-9).floor() as usize)
            .take_while(|&p| p < self.len())
            .collect();
        self.select(&positions, WORK_FPS)
    }

    /// Halves the frame rate (every second frame, starting with the first).
    pub fn to_work_rate(&self) -> Result<Self> {
        self.resample(2.0)
    }

    /// Repeats frame `frame` `copies` extra times.
    pub fn freeze(&self, frame: usize, copies: usize) -> Result<Self> {
        if frame >= self.len() {
            return Err(Error::Config(format!("freeze frame {frame} out of range for {} frames", self.len())));
        }
        let positions: Vec<usize> = (0..self.len())
            .flat_map(|p| std::iter::repeat_n(p, if p == frame { copies + 1 } else { 1 }))
            .collect();
        self.select(&positions, self.frames.fps())
    }

    /// Removes `count` consecutive frames starting at `start`.
    pub fn delete(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.len() || count >= self.len() {
            return Err(Error::Config(format!(
                "cannot delete {count} frames at {start} from {} frames",
                self.len()
            )));
        }
        let positions: Vec<usize> = (0..self.len()).filter(|p| !(start..start + count).contains(p)).collect();
        self.select(&positions, self.frames.fps())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Speed,
    Freeze,
    Delete,
    Identity,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [Self::Speed, Self::Freeze, Self::Delete, Self::Identity];

    pub fn name(self) -> &'static str {
        match self {
            Self::Speed => "speed",
            Self::Freeze => "freeze",
            Self::Delete => "delete",
            Self::Identity => "identity",
        }
    }

    /// Draws concrete parameters for a raw sequence of `raw_len` frames.
    pub fn sample<R: Rng + ?Sized>(self, raw_len: usize, rng: &mut R) -> TemporalTransform {
        let work_len = raw_len.div_ceil(2);
        match self {
            Self::Identity => TemporalTransform::Identity,
            Self::Speed => TemporalTransform::Speed { rate: SPEED_GRID[rng.random_range(0..SPEED_GRID.len())] },
            Self::Freeze => TemporalTransform::Freeze {
                frame: rng.random_range(0..work_len),
                copies: rng.random_range(1..=MAX_EDIT_FRAMES),
            },
            Self::Delete => {
                let count = rng.random_range(1..=MAX_EDIT_FRAMES.min(work_len - 1));
                TemporalTransform::Delete { start: rng.random_range(0..=work_len - count), count }
            }
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete temporal edit applied to a raw (2 fps) sequence.
///
/// Every variant except `Speed` first reduces the raw sequence to 1 fps;
/// `Freeze` and `Delete` positions refer to that reduced sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemporalTransform {
    Identity,
    /// Playback speed relative to 1 fps; raw frames are kept at a stride of `2·rate`.
    Speed { rate: f64 },
    Freeze { frame: usize, copies: usize },
    Delete { start: usize, count: usize },
}

impl TemporalTransform {
    pub fn kind(&self) -> TransformKind {
        match self {
            Self::Identity => TransformKind::Identity,
            Self::Speed { .. } => TransformKind::Speed,
            Self::Freeze { .. } => TransformKind::Freeze,
            Self::Delete { .. } => TransformKind::Delete,
        }
    }

    pub fn apply(&self, raw: &TracedSequence) -> Result<TracedSequence> {
        if raw.len() < MIN_RAW_FRAMES {
            return Err(Error::InsufficientInput(format!(
                "raw sequence has {} frames, need at least {MIN_RAW_FRAMES}",
                raw.len()
            )));
        }
        match *self {
            Self::Identity => raw.to_work_rate(),
            Self::Speed { rate } => {
                if !(0.5..=2.0).contains(&rate) {
                    return Err(Error::Config(format!("speed {rate} outside 0.5..=2.0")));
                }
                raw.resample(2.0 * rate)
            }
            Self::Freeze { frame, copies } => raw.to_work_rate()?.freeze(frame, copies),
            Self::Delete { start, count } => raw.to_work_rate()?.delete(start, count),
        }
    }
}
