//! Frame-feature sequences and the spatial similarity matrix.

use copyalign_tensor::Tensor;

use crate::error::{Error, Result};

/// Per-frame feature vectors (`M×W`) with timestamps in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Tensor<f32>,
    timestamps: Vec<f64>,
    fps: f32,
}

impl FeatureSequence {
    pub fn new(frames: Tensor<f32>, timestamps: Vec<f64>, fps: f32) -> Result<Self> {
        let (m, _) = frames.dims2()?;
        if timestamps.len() != m {
            return Err(Error::Dimension(format!("{m} frames but {} timestamps", timestamps.len())));
        }
        if let Some(w) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("timestamps not strictly increasing at frame {}", w + 1)));
        }
        if !(fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { frames, timestamps, fps })
    }

    /// Frames sampled uniformly at `fps`, frame `i` at `i / fps` seconds.
    pub fn uniform(frames: Tensor<f32>, fps: f32) -> Result<Self> {
        let (m, _) = frames.dims2()?;
        let ts = (0..m).map(|i| i as f64 / fps as f64).collect();
        Self::new(frames, ts, fps)
    }

    pub fn from_rows(rows: &[Vec<f32>], fps: f32) -> Result<Self> {
        Self::uniform(Tensor::from_rows(rows)?, fps)
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn frames(&self) -> &Tensor<f32> {
        &self.frames
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.dim();
        &self.frames.data()[i * w..(i + 1) * w]
    }

    /// Keeps the timestamps, replacing the frame matrix (same shape).
    pub(crate) fn with_frames(&self, frames: Tensor<f32>) -> Self {
        debug_assert_eq!(frames.shape(), self.frames.shape());
        Self { frames, timestamps: self.timestamps.clone(), fps: self.fps }
    }

    /// Scales every frame to unit Euclidean norm.
    pub fn l2_normalize(&self) -> Result<Self> {
        let w = self.dim();
        let mut data = self.frames.data().to_vec();
        for (row_idx, row) in data.chunks_mut(w).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateRow { row: row_idx });
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(self.with_frames(Tensor::new(self.frames.shape(), data)?))
    }

    pub fn is_normalized(&self, tol: f32) -> bool {
        (0..self.len()).all(|i| (self.row(i).iter().map(|v| v * v).sum::<f32>().sqrt() - 1.0).abs() <= tol)
    }
}

/// `M×N` frame-to-frame cosine similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    values: Tensor<f32>,
}

impl SimilarityMatrix {
    pub fn new(values: Tensor<f32>) -> Result<Self> {
        values.dims2()?;
        Ok(Self { values })
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values.data()[i * self.cols() + j]
    }

    pub fn values(&self) -> &Tensor<f32> {
        &self.values
    }
}

/// `S = U Vᵀ` for row-normalized `U`, `V`; every entry is a cosine.
pub fn spatial_similarity(u: &FeatureSequence, v: &FeatureSequence) -> Result<SimilarityMatrix> {
    if u.dim() != v.dim() {
        return Err(Error::Dimension(format!("feature dims {} and {} differ", u.dim(), v.dim())));
    }
    let values = u.frames().matmul(&v.frames().transpose2()?)?;
    SimilarityMatrix::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_three_four_row() {
        let seq = FeatureSequence::from_rows(&[vec![3.0, 4.0], vec![0.0, 1.0]], 1.0).unwrap();
        let n = seq.l2_normalize().unwrap();
        assert!((n.row(0)[0] - 0.6).abs() < 1e-7 && (n.row(0)[1] - 0.8).abs() < 1e-7);
        assert_eq!(n.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn zero_row_reports_its_index() {
        let seq = FeatureSequence::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]], 1.0).unwrap();
        assert!(matches!(seq.l2_normalize(), Err(Error::DegenerateRow { row: 1 })));
    }

    #[test]
    fn timestamps_must_increase() {
        let frames = Tensor::zeros(&[2, 2]);
        assert!(FeatureSequence::new(frames, vec![1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn identical_and_orthogonal_similarities() {
        let u = FeatureSequence::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        let s = spatial_similarity(&u, &u).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(1, 1), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let u = FeatureSequence::from_rows(&[vec![1.0, 0.0]], 1.0).unwrap();
        let v = FeatureSequence::from_rows(&[vec![1.0, 0.0, 0.0]], 1.0).unwrap();
        assert!(matches!(spatial_similarity(&u, &v), Err(Error::Dimension(_))));
    }
}
