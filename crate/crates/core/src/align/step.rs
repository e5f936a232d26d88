use std::collections::BTreeSet;

use super::{AlignConfig, AlignInput, Aligner, AlignmentPath};
use crate::error::{Error, Result};
use crate::features::SimilarityMatrix;
use crate::model::{MaskMap, StepMap};

/// Step-map-guided partial alignment.
pub struct StepAligner;

impl Aligner for StepAligner {
    fn name(&self) -> &'static str {
        "sm"
    }

    fn align(&self, input: &AlignInput<'_>, cfg: &AlignConfig) -> Result<Vec<AlignmentPath>> {
        let step = input.step.ok_or_else(|| Error::Config("the sm aligner needs a step map".into()))?;
        walk_paths(input.similarity, input.mask, step, cfg)
    }
}

/// Partial alignment with a mask map.
pub fn partial_align(s: &SimilarityMatrix, t: &MaskMap, d: &StepMap, cfg: &AlignConfig) -> Result<Vec<AlignmentPath>> {
    walk_paths(s, Some(t), d, cfg)
}

/// Start points are cells with `t > τ` (`s > τ` without a mask map), taken
/// in ascending `i + j`, then `i`. Each walk appends cells with `s·t ≥ σ`,
/// counts consecutive cells below σ, removes every visited cell and its 8
/// neighbours from the start set, and follows the step map. The step map has
/// no entry on the last row or column, where the only move left is along the
/// border (right on the last row, down on the last column). A walk ends after
/// `gap_limit` consecutive misses, at the bottom-right corner, or on reaching
/// a cell already appended to an earlier path.
pub fn walk_paths(s: &SimilarityMatrix, t: Option<&MaskMap>, d: &StepMap, cfg: &AlignConfig) -> Result<Vec<AlignmentPath>> {
    let (m, n) = (s.rows(), s.cols());
    if let Some(t) = t {
        if (t.rows(), t.cols()) != (m, n) {
            return Err(Error::Dimension(format!("mask map {}x{} vs similarity {m}x{n}", t.rows(), t.cols())));
        }
    }
    if m < 2 || n < 2 {
        return Err(Error::InputTooSmall { rows: m, cols: n });
    }
    if (d.rows(), d.cols()) != (m - 1, n - 1) {
        return Err(Error::Dimension(format!("step map {}x{} vs similarity {m}x{n}", d.rows(), d.cols())));
    }
    let tval = |i: usize, j: usize| t.map_or(1.0, |t| t.get(i, j) as f64);
    let start_val = |i: usize, j: usize| t.map_or(s.get(i, j) as f64, |t| t.get(i, j) as f64);

    // Keyed by (i + j, i, j) so the first element is the next start.
    let mut phi: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    for i in 0..m {
        for j in 0..n {
            if start_val(i, j) > cfg.tau {
                phi.insert((i + j, i, j));
            }
        }
    }
    let mut used = vec![false; m * n];
    let mut paths = Vec::new();
    while let Some(&(_, i0, j0)) = phi.first() {
        let (mut i, mut j) = (i0, j0);
        let mut pairs = Vec::new();
        let mut gap = 0;
        loop {
            if s.get(i, j) as f64 * tval(i, j) < cfg.sigma {
                gap += 1;
            } else {
                pairs.push((i, j));
                used[i * n + j] = true;
                gap = 0;
            }
            for a in i.saturating_sub(1)..=(i + 1).min(m - 1) {
                for b in j.saturating_sub(1)..=(j + 1).min(n - 1) {
                    phi.remove(&(a + b, a, b));
                }
            }
            if gap >= cfg.gap_limit || (i == m - 1 && j == n - 1) {
                break;
            }
            (i, j) = if i == m - 1 {
                (i, j + 1)
            } else if j == n - 1 {
                (i + 1, j)
            } else {
                match d.get(i, j) {
                    0 => (i + 1, j + 1),
                    1 => (i, j + 1),
                    _ => (i + 1, j),
                }
            };
            if used[i * n + j] {
                break;
            }
        }
        if !pairs.is_empty() {
            paths.push(AlignmentPath::new(pairs));
        }
    }
    Ok(paths)
}
