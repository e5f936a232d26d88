use std::collections::BTreeSet;

use copyalign_core::align::{
    hough_voting_align, partial_align, score, segments_from_path, soft_weight, walk_paths, weight_and_score,
    weight_filter, AlignInput, Aligner,
};
use copyalign_core::datagen::{make_training_pair, synthetic_sequence, PairConfig, TracedSequence, RAW_FPS};
use copyalign_core::model::{MaskMap, StepMap};
use copyalign_core::{AlignConfig, AlignerRegistry, AlignmentPath, Error, Result, SimilarityMatrix, Weighting};
use copyalign_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sim(m: usize, n: usize, values: &[f32]) -> SimilarityMatrix {
    SimilarityMatrix::new(Tensor::new(&[m, n], values.to_vec()).unwrap()).unwrap()
}

fn path(pairs: &[(usize, usize)]) -> AlignmentPath {
    AlignmentPath::new(pairs.to_vec())
}

#[test]
fn soft_weight_reference_values() {
    assert!((soft_weight(0, 100.0) - 1.0 / 101.0).abs() < 1e-12);
    assert!((soft_weight(5, 100.0) - 0.5975).abs() < 1e-3);
    assert!((soft_weight(16, 100.0) - 0.99999).abs() < 1e-5);
}

#[test]
fn soft_mode_keeps_short_paths_with_small_weight() {
    let cfg = AlignConfig::default();
    let short = path(&[(0, 0), (1, 1)]);
    let long = path(&(0..10).map(|i| (i, i)).collect::<Vec<_>>());
    let soft = weight_filter(vec![short.clone(), long.clone()], &cfg);
    assert_eq!(soft.len(), 2);
    assert!((soft[0].alpha - 1.0 / (1.0 + 100.0 * (-2.0f64).exp())).abs() < 1e-12);
    assert!((soft[0].alpha - 0.0688).abs() < 1e-4);
    let hard = weight_filter(vec![short, long.clone()], &AlignConfig { weighting: Weighting::Hard, ..cfg });
    assert_eq!(hard.len(), 1);
    assert_eq!(hard[0].pairs, long.pairs);
    assert_eq!(hard[0].alpha, 1.0);
}

#[test]
fn constant_product_scores_alpha_sigma() {
    let s = sim(3, 3, &[0.4; 9]);
    let t = MaskMap::new(Tensor::new(&[3, 3], vec![0.25; 9]).unwrap()).unwrap();
    let p = path(&[(0, 0), (1, 1), (2, 2)]);
    let got = score(&p, &s, Some(&t), 0.7).unwrap();
    assert!((got - 0.7 * 0.1).abs() < 1e-7);
    assert!(matches!(score(&path(&[]), &s, None, 1.0), Err(Error::EmptyPath)));
}

#[test]
fn segment_examples() {
    let (u, v) = segments_from_path(&path(&[(2, 5), (3, 6), (4, 7)]), 1.0, 1.0).unwrap();
    assert_eq!((u.start, u.end, v.start, v.end), (2.0, 4.0, 5.0, 7.0));
    let (u2, v2) = segments_from_path(&path(&[(2, 5), (3, 6), (4, 7)]), 2.0, 2.0).unwrap();
    assert_eq!((u2.start, u2.end, v2.start, v2.end), (1.0, 2.0, 2.5, 3.5));
    let (z, w) = segments_from_path(&path(&[(0, 0)]), 1.0, 1.0).unwrap();
    assert_eq!((z.start, z.end, w.start, w.end), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn registry_accepts_new_strategies() {
    struct Whole;
    impl Aligner for Whole {
        fn name(&self) -> &'static str {
            "whole"
        }
        fn align(&self, input: &AlignInput<'_>, _: &AlignConfig) -> Result<Vec<AlignmentPath>> {
            let n = input.similarity.rows().min(input.similarity.cols());
            Ok(vec![AlignmentPath::new((0..n).map(|i| (i, i)).collect())])
        }
    }
    let mut reg = AlignerRegistry::with_defaults();
    reg.register(Box::new(Whole));
    assert_eq!(reg.names(), vec!["hv", "sm", "whole"]);
    let s = sim(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let input = AlignInput { similarity: &s, mask: None, step: None };
    let paths = reg.get("whole").unwrap().align(&input, &AlignConfig::default()).unwrap();
    assert_eq!(paths[0].pairs, vec![(0, 0), (1, 1)]);
    assert!(matches!(reg.get("sm").unwrap().align(&input, &AlignConfig::default()), Err(Error::Config(_))));
    assert!(matches!(reg.get("dtw"), Err(Error::UnknownAligner(_))));
}

/// Random `m×n` maps with values in [0, 1] and random step categories.
fn random_maps(m: usize, n: usize, seed: u64) -> (SimilarityMatrix, MaskMap, StepMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<f32> = (0..m * n).map(|_| rng.random::<f32>()).collect();
    let t: Vec<f32> = (0..m * n).map(|_| rng.random::<f32>()).collect();
    let d: Vec<u8> = (0..(m - 1) * (n - 1)).map(|_| rng.random_range(0..3)).collect();
    (
        sim(m, n, &s),
        MaskMap::new(Tensor::new(&[m, n], t).unwrap()).unwrap(),
        StepMap::from_categories(m - 1, n - 1, d).unwrap(),
    )
}

fn check_walk(paths: &[AlignmentPath], s: &SimilarityMatrix, t: Option<&MaskMap>, sigma: f64) -> std::result::Result<(), TestCaseError> {
    let mut seen = BTreeSet::new();
    for p in paths {
        prop_assert!(!p.is_empty());
        // Gap cells are skipped, so appended cells advance by at least one step but never move up or left.
        prop_assert!(p.pairs.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1 && w[1] != w[0]));
        for &(i, j) in &p.pairs {
            prop_assert!(seen.insert((i, j)), "({}, {}) appended twice", i, j);
            let st = s.get(i, j) as f64 * t.map_or(1.0, |t| t.get(i, j) as f64);
            prop_assert!(st >= sigma);
        }
    }
    Ok(())
}

/// Gap-free generated pair with its oracle maps.
type OracleCase = (BTreeSet<(usize, usize)>, SimilarityMatrix, MaskMap, StepMap);

fn oracle_case(seed: u64) -> Option<OracleCase> {
    let cfg = PairConfig { feature_dim: 4, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(cfg.raw_len_min..=cfg.raw_len_max);
    let base = TracedSequence::raw(synthetic_sequence(len, cfg.feature_dim, cfg.correlation, RAW_FPS, &mut rng).unwrap());
    let pair = make_training_pair(&base, &cfg, &mut rng).unwrap();
    if !pair.match_set.is_single_chain() {
        return None;
    }
    let s = SimilarityMatrix::new(pair.mask_label.clone()).unwrap();
    let t = MaskMap::new(pair.mask_label.clone()).unwrap();
    Some((pair.match_set.pairs().clone(), s, t, pair.step_targets.argmax_map()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn walks_terminate_with_monotone_disjoint_paths(
        m in 2usize..14, n in 2usize..14, seed in any::<u64>(), tau in 0.05f64..0.95, sigma in 0.05f64..0.95,
    ) {
        let (s, t, d) = random_maps(m, n, seed);
        let cfg = AlignConfig { tau, sigma, ..Default::default() };
        let with_mask = partial_align(&s, &t, &d, &cfg).unwrap();
        check_walk(&with_mask, &s, Some(&t), sigma)?;
        let without = walk_paths(&s, None, &d, &cfg).unwrap();
        check_walk(&without, &s, None, sigma)?;
        // Each walk adds at most M + N − 1 cells.
        prop_assert!(with_mask.iter().all(|p| p.len() < m + n));
    }

    #[test]
    fn scores_are_bounded_by_alpha(m in 2usize..10, n in 2usize..10, seed in any::<u64>()) {
        let (s, t, d) = random_maps(m, n, seed);
        let cfg = AlignConfig::default();
        let paths = partial_align(&s, &t, &d, &cfg).unwrap();
        for p in weight_and_score(paths, &s, Some(&t), &cfg).unwrap() {
            prop_assert!(p.alpha > 0.0 && p.alpha < 1.0);
            prop_assert!(p.score <= p.alpha + 1e-12);
            prop_assert!(p.score >= p.alpha * cfg.sigma - 1e-12);
        }
    }

    #[test]
    fn soft_weight_increases_with_extent(len in 0usize..40, gamma in 0.1f64..2000.0) {
        let (a, b) = (soft_weight(len, gamma), soft_weight(len + 1, gamma));
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(b > a || b == a && a > 1.0 - 1e-15);
    }

    #[test]
    fn oracle_maps_recover_gap_free_match_sets(seed in any::<u64>()) {
        let Some((r, s, t, d)) = oracle_case(seed) else { return Ok(()) };
        let paths = partial_align(&s, &t, &d, &AlignConfig::default()).unwrap();
        prop_assert_eq!(paths.len(), 1);
        let got: BTreeSet<(usize, usize)> = paths[0].pairs.iter().copied().collect();
        prop_assert_eq!(got, r);
    }

    #[test]
    fn hough_paths_are_disjoint_and_supported(m in 2usize..14, n in 2usize..14, seed in any::<u64>(), thr in 0.3f64..0.9) {
        let (s, _, _) = random_maps(m, n, seed);
        let paths = hough_voting_align(&s, thr, 3);
        let mut seen = BTreeSet::new();
        for p in &paths {
            prop_assert!(p.len() >= 3);
            let offsets: Vec<i64> = p.pairs.iter().map(|&(i, j)| j as i64 - i as i64).collect();
            let (lo, hi) = (offsets.iter().min().unwrap(), offsets.iter().max().unwrap());
            prop_assert!(hi - lo <= 2);
            for &(i, j) in &p.pairs {
                prop_assert!(s.get(i, j) as f64 >= thr);
                prop_assert!(seen.insert((i, j)));
            }
        }
    }
}
