use std::collections::BTreeSet;

use copyalign_core::datagen::{
    feature_perturb, make_training_pair, mask_label, synthetic_sequence, Dataset, GenConfig, MatchSet,
    PairConfig, TemporalTransform, TracedSequence, TransformKind, RAW_FPS,
};
use copyalign_core::FeatureSequence;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raw_base(len: usize, dim: usize, seed: u64) -> TracedSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TracedSequence::raw(synthetic_sequence(len, dim, 0.8, RAW_FPS, &mut rng).unwrap())
}

fn origins(seq: &TracedSequence) -> Vec<Option<usize>> {
    seq.origin_ids().iter().map(|&o| Some(o)).collect()
}

fn generated_pair(seed: u64) -> copyalign_core::datagen::TrainingPair {
    let cfg = PairConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(cfg.raw_len_min..=cfg.raw_len_max);
    let base = TracedSequence::raw(synthetic_sequence(len, cfg.feature_dim, cfg.correlation, RAW_FPS, &mut rng).unwrap());
    make_training_pair(&base, &cfg, &mut rng).unwrap()
}

#[test]
fn identity_pair_without_noise_matches_the_diagonal() {
    let base = raw_base(32, 8, 1);
    let cfg = PairConfig { feature_dim: 8, perturb: 0.0, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pair = copyalign_core::datagen::try_pair(&base, [TemporalTransform::Identity; 2], &cfg, &mut rng)
        .unwrap()
        .expect("identity pair is acceptable");
    let expected: BTreeSet<_> = (0..16).map(|i| (i, i)).collect();
    assert_eq!(pair.match_set.pairs(), &expected);
    for i in 0..16 {
        for j in 0..16 {
            assert_eq!(pair.mask_label.get(&[i, j]), if i == j { 1.0 } else { 0.0 });
        }
    }
    assert_eq!(pair.anchor, pair.positive);
}

#[test]
fn freeze_shifts_the_diagonal_after_the_frozen_frame() {
    let base = raw_base(32, 4, 3);
    let anchor = TemporalTransform::Identity.apply(&base).unwrap();
    let positive = TemporalTransform::Freeze { frame: 5, copies: 2 }.apply(&base).unwrap();
    assert_eq!(positive.len(), 18);
    let r = MatchSet::from_origins(&origins(&anchor), &origins(&positive));
    let mut expected: BTreeSet<(usize, usize)> = (0..5).map(|i| (i, i)).collect();
    expected.extend([(5, 5), (5, 6), (5, 7)]);
    expected.extend((6..16).map(|i| (i, i + 2)));
    assert_eq!(r.pairs(), &expected);
}

#[test]
fn perturbation_strength_zero_is_identity() {
    let seq = synthetic_sequence(10, 16, 0.8, 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let out = feature_perturb(&seq, 0.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(out, seq);
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn perturbation_self_cosine_matches_the_noise_model() {
    // Unit x plus isotropic noise of stdev σ per component: |x + n|² ≈ 1 + Wσ²,
    // so the mean self-cosine is close to 1 / sqrt(1 + Wσ²).
    let (w, sigma) = (32usize, 0.1f64);
    let seq = synthetic_sequence(1000, w, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let out = feature_perturb(&seq, sigma, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let cosines: Vec<f64> = (0..seq.len()).map(|i| cosine(seq.row(i), out.row(i))).collect();
    let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
    let expected = 1.0 / (1.0 + w as f64 * sigma * sigma).sqrt();
    assert!((mean - expected).abs() < 0.01, "mean self-cosine {mean}, expected ≈ {expected}");
    assert!(cosines.iter().all(|&c| c < 1.0));
}

#[test]
fn transform_kinds_are_drawn_uniformly() {
    let cfg = GenConfig { train_pairs: 1000, heldout_pairs: 0, negative_pairs: 0, ..Default::default() };
    let data = Dataset::generate(&cfg).unwrap();
    let counts = &data.manifest.transform_counts;
    let total: usize = counts.values().sum();
    assert_eq!(total, 2000);
    let expected = total as f64 / 4.0;
    let chi2: f64 = TransformKind::ALL.iter().map(|k| (counts[k] as f64 - expected).powi(2) / expected).sum();
    // 3 degrees of freedom, 0.999 quantile.
    assert!(chi2 < 16.27, "χ² = {chi2} for {counts:?}");
}

#[test]
fn generation_is_deterministic_per_seed() {
    let cfg = GenConfig { train_pairs: 6, heldout_pairs: 2, negative_pairs: 2, ..Default::default() };
    let a = Dataset::generate(&cfg).unwrap();
    assert_eq!(a, Dataset::generate(&cfg).unwrap());
    let b = Dataset::generate(&GenConfig { seed: cfg.seed + 1, ..cfg.clone() }).unwrap();
    assert_ne!(a.train[0].anchor, b.train[0].anchor);
    assert_eq!(a.manifest.seed, cfg.seed);
}

#[test]
fn per_pair_generators_are_independent_of_split_sizes() {
    let small = Dataset::generate(&GenConfig { train_pairs: 3, heldout_pairs: 0, negative_pairs: 0, ..Default::default() }).unwrap();
    let large = Dataset::generate(&GenConfig { train_pairs: 5, heldout_pairs: 0, negative_pairs: 0, ..Default::default() }).unwrap();
    assert_eq!(small.train[..], large.train[..3]);
}

#[test]
fn negatives_share_no_frames_with_each_other() {
    let data = Dataset::generate(&GenConfig { train_pairs: 1, heldout_pairs: 0, negative_pairs: 5, ..Default::default() }).unwrap();
    for n in &data.negatives {
        for i in 0..n.anchor.len() {
            for j in 0..n.positive.len() {
                assert!(cosine(n.anchor.row(i), n.positive.row(j)) < 0.99);
            }
        }
    }
}

fn check_label_rules(pair: &copyalign_core::datagen::TrainingPair) -> Result<(), TestCaseError> {
    let r = &pair.match_set;
    prop_assert!(r.len() >= 4, "|R| = {}", r.len());
    // Provenance soundness.
    for i in 0..pair.anchor.len() {
        for j in 0..pair.positive.len() {
            let same = pair.anchor_origin[i].is_some() && pair.anchor_origin[i] == pair.positive_origin[j];
            prop_assert_eq!(r.contains(i, j), same);
            prop_assert_eq!(pair.mask_label.get(&[i, j]) == 1.0, same);
        }
    }
    prop_assert_eq!(&mask_label(r), &pair.mask_label);
    // Normalization and category-0 exclusivity.
    for (_, d) in pair.step_targets.positions() {
        prop_assert_eq!(d.iter().sum::<f32>(), 1.0);
        if d[0] > 0.0 {
            prop_assert!(d[1] == 0.0 && d[2] == 0.0);
        }
    }
    // Order preservation: per-row min and max of j never decrease with i.
    let mut rows: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for &(i, j) in r.pairs() {
        let e = rows.entry(i).or_insert((j, j));
        *e = (e.0.min(j), e.1.max(j));
    }
    let bounds: Vec<(usize, usize)> = rows.into_values().collect();
    prop_assert!(bounds.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    let ((a0, a1), (b0, b1)) = r.spans().unwrap();
    prop_assert!(a1 > a0 && b1 > b0);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_pairs_obey_label_rules(seed in any::<u64>()) {
        check_label_rules(&generated_pair(seed))?;
    }

    #[test]
    fn origins_are_sorted_and_in_range(seed in any::<u64>(), kind in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.random_range(24..=48);
        let base = raw_base(len, 4, seed);
        let t = TransformKind::ALL[kind].sample(len, &mut rng);
        let out = t.apply(&base).unwrap();
        prop_assert!(out.origin_ids().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(out.origin_ids().iter().all(|&o| o < len));
        prop_assert!(out.frames().is_normalized(1e-5));
    }

    #[test]
    fn perturbed_rows_stay_unit_norm(seed in any::<u64>(), strength in 0.0f64..0.5) {
        let seq = synthetic_sequence(8, 16, 0.8, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let out: FeatureSequence = feature_perturb(&seq, strength, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        prop_assert!(out.is_normalized(1e-5));
    }
}
