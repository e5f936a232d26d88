//! Mask and step labels derived from a ground-truth match set.

use std::collections::{BTreeMap, BTreeSet};

use copyalign_tensor::Tensor;

use crate::error::{Error, Result};
use crate::model::{StepMap, STEP_CATEGORIES};

/// Index pairs `(i, j)` whose anchor frame `i` and positive frame `j` trace
/// back to the same source frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchSet {
    pairs: BTreeSet<(usize, usize)>,
    anchor_len: usize,
    positive_len: usize,
}

impl MatchSet {
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>, anchor_len: usize, positive_len: usize) -> Result<Self> {
        let pairs: BTreeSet<_> = pairs.into_iter().collect();
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= anchor_len || j >= positive_len) {
            return Err(Error::Dimension(format!(
                "match ({i}, {j}) outside a {anchor_len}x{positive_len} map"
            )));
        }
        Ok(Self { pairs, anchor_len, positive_len })
    }

    /// Matches frames with equal origin; `None` marks padding that never matches.
    pub fn from_origins(anchor: &[Option<usize>], positive: &[Option<usize>]) -> Self {
        let mut pairs = BTreeSet::new();
        for (i, a) in anchor.iter().enumerate() {
            let Some(a) = a else { continue };
            for (j, p) in positive.iter().enumerate() {
                if p.as_ref() == Some(a) {
                    pairs.insert((i, j));
                }
            }
        }
        Self { pairs, anchor_len: anchor.len(), positive_len: positive.len() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i, j))
    }

    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }

    pub fn anchor_len(&self) -> usize {
        self.anchor_len
    }

    pub fn positive_len(&self) -> usize {
        self.positive_len
    }

    /// Inclusive index span `(min, max)` on the anchor and positive axes.
    pub fn spans(&self) -> Option<((usize, usize), (usize, usize))> {
        let first = self.pairs.iter().next()?;
        let init = ((first.0, first.0), (first.1, first.1));
        Some(self.pairs.iter().fold(init, |((a0, a1), (b0, b1)), &(i, j)| {
            ((a0.min(i), a1.max(i)), (b0.min(j), b1.max(j)))
        }))
    }

    /// True when the sorted pairs form one chain where every consecutive
    /// pair differs by exactly one of `(1,1)`, `(0,1)`, `(1,0)`.
    pub fn is_single_chain(&self) -> bool {
        !self.pairs.is_empty()
            && self.pairs.iter().zip(self.pairs.iter().skip(1)).all(|(&(i0, j0), &(i1, j1))| {
                matches!((i1.wrapping_sub(i0), j1.wrapping_sub(j0)), (1, 1) | (0, 1) | (1, 0))
            })
    }
}

/// `M×N` indicator of `R`.
pub fn mask_label(matches: &MatchSet) -> Tensor<f32> {
    let mut t = Tensor::zeros(&[matches.anchor_len, matches.positive_len]);
    for &(i, j) in &matches.pairs {
        t.set(&[i, j], 1.0);
    }
    t
}

/// Target direction probabilities on the `(M−1)×(N−1)` step grid.
///
/// Only responsible positions (some successor in `R`) are stored; each
/// stored distribution sums to exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTargets {
    rows: usize,
    cols: usize,
    probs: BTreeMap<(usize, usize), [f32; STEP_CATEGORIES]>,
}

impl StepTargets {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Number of responsible positions.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<[f32; STEP_CATEGORIES]> {
        self.probs.get(&(i, j)).copied()
    }

    pub fn positions(&self) -> impl Iterator<Item = (&(usize, usize), &[f32; STEP_CATEGORIES])> {
        self.probs.iter()
    }

    /// Non-zero `(i, j, l, d)` records, i.e. the set `Q` with its weights.
    pub fn records(&self) -> Vec<(usize, usize, usize, f32)> {
        self.probs
            .iter()
            .flat_map(|(&(i, j), d)| (0..STEP_CATEGORIES).filter(|&l| d[l] > 0.0).map(move |l| (i, j, l, d[l])))
            .collect()
    }

    pub fn from_records(rows: usize, cols: usize, records: &[(usize, usize, usize, f32)]) -> Result<Self> {
        let mut probs: BTreeMap<(usize, usize), [f32; STEP_CATEGORIES]> = BTreeMap::new();
        for &(i, j, l, d) in records {
            if i >= rows || j >= cols || l >= STEP_CATEGORIES {
                return Err(Error::Dimension(format!("step record ({i}, {j}, {l}) outside {rows}x{cols}x3")));
            }
            probs.entry((i, j)).or_default()[l] = d;
        }
        Ok(Self { rows, cols, probs })
    }

    /// Dense `3×(M−1)×(N−1)` tensor; zeros at non-responsible positions.
    pub fn to_dense(&self) -> Tensor<f32> {
        let mut t = Tensor::zeros(&[STEP_CATEGORIES, self.rows, self.cols]);
        for (&(i, j), d) in &self.probs {
            for (l, &v) in d.iter().enumerate() {
                t.set(&[l, i, j], v);
            }
        }
        t
    }

    /// Argmax of each target distribution, category 0 where nothing is
    /// responsible; ties go to the lowest category.
    pub fn argmax_map(&self) -> StepMap {
        let mut cats = vec![0u8; self.rows * self.cols];
        for (&(i, j), d) in &self.probs {
            let mut best = 0;
            for l in 1..STEP_CATEGORIES {
                if d[l] > d[best] {
                    best = l;
                }
            }
            cats[i * self.cols + j] = best as u8;
        }
        StepMap::from_categories(self.rows, self.cols, cats).expect("categories are in range")
    }
}

/// Derives step targets from `R`.
///
/// Category 0 (right-down) applies when `(i+1, j+1) ∈ R` and excludes the
/// others; otherwise right `(i, j+1)` and down `(i+1, j)` each apply when in
/// `R`, splitting the mass 0.5/0.5 when both do.
pub fn step_label(matches: &MatchSet) -> StepTargets {
    let rows = matches.anchor_len.saturating_sub(1);
    let cols = matches.positive_len.saturating_sub(1);
    let mut probs = BTreeMap::new();
    for i in 0..rows {
        for j in 0..cols {
            let diag = matches.contains(i + 1, j + 1);
            let right = !diag && matches.contains(i, j + 1);
            let down = !diag && matches.contains(i + 1, j);
            let d = match (diag, right, down) {
                (true, _, _) => [1.0, 0.0, 0.0],
                (false, true, true) => [0.0, 0.5, 0.5],
                (false, true, false) => [0.0, 1.0, 0.0],
                (false, false, true) => [0.0, 0.0, 1.0],
                (false, false, false) => continue,
            };
            probs.insert((i, j), d);
        }
    }
    StepTargets { rows, cols, probs }
}
