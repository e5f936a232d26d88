use std::collections::BTreeMap;

use super::{AlignConfig, AlignInput, Aligner, AlignmentPath};
use crate::error::Result;
use crate::features::SimilarityMatrix;

/// Temporal Hough voting over frame offsets; ignores mask and step maps.
pub struct HoughAligner;

impl Aligner for HoughAligner {
    fn name(&self) -> &'static str {
        "hv"
    }

    fn align(&self, input: &AlignInput<'_>, cfg: &AlignConfig) -> Result<Vec<AlignmentPath>> {
        Ok(hough_voting_align(input.similarity, cfg.hv_threshold, cfg.hv_vote_min))
    }
}

/// Matches with `s ≥ sim_threshold` vote for their offset `j − i`. Bins are
/// visited by descending vote count (ties: smaller offset first); each claims
/// the still-unclaimed matches within ±1 of its offset and becomes a path,
/// ordered by `(i, j)`, when it claims at least `vote_min` of them.
pub fn hough_voting_align(s: &SimilarityMatrix, sim_threshold: f64, vote_min: usize) -> Vec<AlignmentPath> {
    let mut matches: Vec<(usize, usize)> = Vec::new();
    let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
    for i in 0..s.rows() {
        for j in 0..s.cols() {
            if s.get(i, j) as f64 >= sim_threshold {
                matches.push((i, j));
                *votes.entry(j as i64 - i as i64).or_default() += 1;
            }
        }
    }
    let mut bins: Vec<(i64, usize)> = votes.into_iter().collect();
    bins.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut claimed = vec![false; matches.len()];
    let mut paths = Vec::new();
    for (delta, _) in bins {
        let members: Vec<usize> = (0..matches.len())
            .filter(|&k| !claimed[k] && ((matches[k].1 as i64 - matches[k].0 as i64) - delta).abs() <= 1)
            .collect();
        if members.len() < vote_min {
            continue;
        }
        for &k in &members {
            claimed[k] = true;
        }
        paths.push(AlignmentPath::new(members.into_iter().map(|k| matches[k]).collect()));
    }
    paths
}

#[cfg(test)]
mod tests {
    use copyalign_tensor::Tensor;

    use super::*;

    fn sim(n: usize, on: impl Fn(usize, usize) -> bool) -> SimilarityMatrix {
        SimilarityMatrix::new(Tensor::from_fn(&[n, n], |k| if on(k / n, k % n) { 0.9 } else { 0.1 })).unwrap()
    }

    #[test]
    fn diagonal_is_one_path() {
        let paths = hough_voting_align(&sim(6, |i, j| i == j), 0.5, 3);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].pairs, (0..6).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn shifted_diagonal_votes_for_its_offset() {
        let paths = hough_voting_align(&sim(10, |i, j| j == i + 3), 0.5, 3);
        assert_eq!(paths.len(), 1);
        assert!(paths[0].pairs.iter().all(|&(i, j)| j == i + 3));
        assert_eq!(paths[0].len(), 7);
    }

    #[test]
    fn low_similarity_gives_nothing() {
        assert!(hough_voting_align(&sim(6, |_, _| false), 0.5, 3).is_empty());
    }
}
