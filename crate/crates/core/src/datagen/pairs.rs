//! Anchor/positive pair fabrication from synthetic or loaded base sequences.

use std::collections::BTreeMap;

use copyalign_tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::labels::{mask_label, step_label, MatchSet, StepTargets};
use super::transform::{TemporalTransform, TracedSequence, TransformKind, RAW_FPS, WORK_FPS};
use crate::error::{Error, Result};
use crate::eval::{GroundTruthPair, Segment};
use crate::features::FeatureSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Frames per anchor/positive after trimming or padding.
    pub seq_len: usize,
    pub feature_dim: usize,
    /// Stdev of the additive feature-space noise.
    pub perturb: f64,
    /// Correlation between consecutive raw frames of synthetic sequences.
    pub correlation: f64,
    pub raw_len_min: usize,
    pub raw_len_max: usize,
    pub min_matches: usize,
    pub max_attempts: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            seq_len: 16,
            feature_dim: 32,
            perturb: 0.1,
            correlation: 0.8,
            raw_len_min: 24,
            raw_len_max: 48,
            min_matches: 4,
            max_attempts: 100,
        }
    }
}

/// Unit-normalized Gaussian frames with AR(1) drift between consecutive frames.
pub fn synthetic_sequence<R: Rng + ?Sized>(
    len: usize,
    dim: usize,
    correlation: f64,
    fps: f32,
    rng: &mut R,
) -> Result<FeatureSequence> {
    let innovation = (1.0 - correlation * correlation).max(0.0).sqrt();
    let mut data = Vec::with_capacity(len * dim);
    let mut prev: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    for t in 0..len {
        if t > 0 {
            for v in &mut prev {
                let e: f64 = StandardNormal.sample(rng);
                *v = correlation * *v + innovation * e;
            }
        }
        data.extend(prev.iter().map(|&v| v as f32));
    }
    FeatureSequence::uniform(Tensor::new(&[len, dim], data)?, fps)?.l2_normalize()
}

/// Adds zero-mean Gaussian noise of stdev `strength` to every component, then
/// renormalizes rows. Stands in for image-level edits.
pub fn feature_perturb<R: Rng + ?Sized>(seq: &FeatureSequence, strength: f64, rng: &mut R) -> Result<FeatureSequence> {
    if !(strength >= 0.0) {
        return Err(Error::Config(format!("perturbation strength must be >= 0, got {strength}")));
    }
    if strength == 0.0 {
        return Ok(seq.clone());
    }
    let noise = Normal::new(0.0, strength).map_err(|e| Error::Config(e.to_string()))?;
    let data = seq.frames().data().iter().map(|&v| v + noise.sample(rng) as f32).collect();
    seq.with_frames(Tensor::new(seq.frames().shape(), data)?).l2_normalize()
}

/// Fits a traced sequence to `len` frames: a random window when longer,
/// distractor padding split between front and back when shorter.
fn assemble<R: Rng + ?Sized>(
    seq: &TracedSequence,
    len: usize,
    cfg: &PairConfig,
    rng: &mut R,
) -> Result<(Vec<f32>, Vec<Option<usize>>)> {
    let w = seq.frames().dim();
    let rows = |range: std::ops::Range<usize>| -> Vec<f32> {
        seq.frames().frames().data()[range.start * w..range.end * w].to_vec()
    };
    if seq.len() >= len {
        let start = rng.random_range(0..=seq.len() - len);
        let origins = seq.origin_ids()[start..start + len].iter().map(|&o| Some(o)).collect();
        return Ok((rows(start..start + len), origins));
    }
    let pad = len - seq.len();
    let front = rng.random_range(0..=pad);
    let distractor = synthetic_sequence(pad, w, cfg.correlation, WORK_FPS, rng)?;
    let d = distractor.frames().data();
    let mut data = Vec::with_capacity(len * w);
    data.extend_from_slice(&d[..front * w]);
    data.extend(rows(0..seq.len()));
    data.extend_from_slice(&d[front * w..]);
    let mut origins = vec![None; front];
    origins.extend(seq.origin_ids().iter().map(|&o| Some(o)));
    origins.resize(len, None);
    Ok((data, origins))
}

fn to_sequence(data: Vec<f32>, len: usize, dim: usize) -> Result<FeatureSequence> {
    FeatureSequence::uniform(Tensor::new(&[len, dim], data)?, WORK_FPS)
}

/// Self-supervised training sample with exact labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub anchor: FeatureSequence,
    pub positive: FeatureSequence,
    /// Source frame per anchor frame; `None` for distractor padding.
    pub anchor_origin: Vec<Option<usize>>,
    pub positive_origin: Vec<Option<usize>>,
    pub transforms: [TemporalTransform; 2],
    pub match_set: MatchSet,
    pub mask_label: Tensor<f32>,
    pub step_targets: StepTargets,
}

impl TrainingPair {
    /// Builds labels from origins; feature rows are taken as given.
    pub fn from_parts(
        anchor: FeatureSequence,
        positive: FeatureSequence,
        anchor_origin: Vec<Option<usize>>,
        positive_origin: Vec<Option<usize>>,
        transforms: [TemporalTransform; 2],
    ) -> Result<Self> {
        if anchor_origin.len() != anchor.len() || positive_origin.len() != positive.len() {
            return Err(Error::Dimension("origin ids do not match sequence lengths".into()));
        }
        let match_set = MatchSet::from_origins(&anchor_origin, &positive_origin);
        Ok(Self {
            mask_label: mask_label(&match_set),
            step_targets: step_label(&match_set),
            match_set,
            anchor,
            positive,
            anchor_origin,
            positive_origin,
            transforms,
        })
    }

    /// Ground-truth segment pair spanning the match set (min/max timestamps).
    pub fn ground_truth(&self, query_id: &str, ref_id: &str) -> Option<GroundTruthPair> {
        let ((a0, a1), (b0, b1)) = self.match_set.spans()?;
        let ta = self.anchor.timestamps();
        let tb = self.positive.timestamps();
        Some(GroundTruthPair {
            query_id: query_id.to_string(),
            ref_id: ref_id.to_string(),
            q: Segment::new(ta[a0], ta[a1]).ok()?,
            r: Segment::new(tb[b0], tb[b1]).ok()?,
        })
    }
}

fn acceptable(matches: &MatchSet, min_matches: usize) -> bool {
    matches.len() >= min_matches
        && matches.spans().is_some_and(|((a0, a1), (b0, b1))| a1 > a0 && b1 > b0)
}

const WINDOW_TRIES: usize = 8;

/// Transforms `base` (raw, 2 fps) twice with independently drawn temporal
/// edits, fits both to `seq_len`, perturbs features and derives labels.
///
/// Draws are repeated until at least `min_matches` frame pairs survive and the
/// match set spans more than one frame on both axes.
pub fn make_training_pair<R: Rng + ?Sized>(base: &TracedSequence, cfg: &PairConfig, rng: &mut R) -> Result<TrainingPair> {
    for _ in 0..cfg.max_attempts {
        let ta = TransformKind::ALL[rng.random_range(0..4)].sample(base.len(), rng);
        let tb = TransformKind::ALL[rng.random_range(0..4)].sample(base.len(), rng);
        if let Some(pair) = try_pair(base, [ta, tb], cfg, rng)? {
            return Ok(pair);
        }
    }
    Err(Error::Generation { attempts: cfg.max_attempts })
}

/// Like [`make_training_pair`] with fixed temporal edits; `None` when no
/// window choice yields an acceptable match set.
pub fn try_pair<R: Rng + ?Sized>(
    base: &TracedSequence,
    transforms: [TemporalTransform; 2],
    cfg: &PairConfig,
    rng: &mut R,
) -> Result<Option<TrainingPair>> {
    let a = transforms[0].apply(base)?;
    let b = transforms[1].apply(base)?;
    let dim = base.frames().dim();
    for _ in 0..WINDOW_TRIES {
        let (da, oa) = assemble(&a, cfg.seq_len, cfg, rng)?;
        let (db, ob) = assemble(&b, cfg.seq_len, cfg, rng)?;
        let matches = MatchSet::from_origins(&oa, &ob);
        if !acceptable(&matches, cfg.min_matches) {
            continue;
        }
        let anchor = feature_perturb(&to_sequence(da, cfg.seq_len, dim)?, cfg.perturb, rng)?;
        let positive = feature_perturb(&to_sequence(db, cfg.seq_len, dim)?, cfg.perturb, rng)?;
        return Ok(Some(TrainingPair::from_parts(anchor, positive, oa, ob, transforms)?));
    }
    Ok(None)
}

/// Two unrelated sequences prepared like a training pair; no frame matches.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativePair {
    pub anchor: FeatureSequence,
    pub positive: FeatureSequence,
    pub transforms: [TemporalTransform; 2],
}

pub fn make_negative_pair<R: Rng + ?Sized>(
    base_a: &TracedSequence,
    base_b: &TracedSequence,
    cfg: &PairConfig,
    rng: &mut R,
) -> Result<NegativePair> {
    let ta = TransformKind::ALL[rng.random_range(0..4)].sample(base_a.len(), rng);
    let tb = TransformKind::ALL[rng.random_range(0..4)].sample(base_b.len(), rng);
    let dim = base_a.frames().dim();
    let (da, _) = assemble(&ta.apply(base_a)?, cfg.seq_len, cfg, rng)?;
    let (db, _) = assemble(&tb.apply(base_b)?, cfg.seq_len, cfg, rng)?;
    Ok(NegativePair {
        anchor: feature_perturb(&to_sequence(da, cfg.seq_len, dim)?, cfg.perturb, rng)?,
        positive: feature_perturb(&to_sequence(db, cfg.seq_len, dim)?, cfg.perturb, rng)?,
        transforms: [ta, tb],
    })
}

fn synthetic_base<R: Rng + ?Sized>(cfg: &PairConfig, rng: &mut R) -> Result<TracedSequence> {
    let len = rng.random_range(cfg.raw_len_min..=cfg.raw_len_max);
    Ok(TracedSequence::raw(synthetic_sequence(len, cfg.feature_dim, cfg.correlation, RAW_FPS, rng)?))
}

/// Per-pair generator: `seed XOR pair_index`.
pub fn pair_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub negative_pairs: usize,
    pub pair: PairConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { seed: 7, train_pairs: 2000, heldout_pairs: 200, negative_pairs: 200, pair: PairConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub negative_pairs: usize,
    /// Temporal transform kinds drawn for positive pairs (anchor and positive both counted).
    pub transform_counts: BTreeMap<TransformKind, usize>,
    pub config: GenConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<TrainingPair>,
    pub heldout: Vec<TrainingPair>,
    pub negatives: Vec<NegativePair>,
    pub manifest: Manifest,
}

pub fn heldout_ids(index: usize) -> (String, String) {
    (format!("heldout_{index:05}_a"), format!("heldout_{index:05}_p"))
}

pub fn negative_ids(index: usize) -> (String, String) {
    (format!("negative_{index:05}_a"), format!("negative_{index:05}_p"))
}

impl Dataset {
    /// Generates every split from synthetic base sequences.
    pub fn generate(cfg: &GenConfig) -> Result<Self> {
        if cfg.train_pairs == 0 {
            return Err(Error::Config("at least one training pair is required".into()));
        }
        let positive = |index: usize| -> Result<TrainingPair> {
            let mut rng = pair_rng(cfg.seed, index);
            let base = synthetic_base(&cfg.pair, &mut rng)?;
            make_training_pair(&base, &cfg.pair, &mut rng)
        };
        let train = (0..cfg.train_pairs).map(positive).collect::<Result<Vec<_>>>()?;
        let heldout = (0..cfg.heldout_pairs).map(|i| positive(cfg.train_pairs + i)).collect::<Result<Vec<_>>>()?;
        let offset = cfg.train_pairs + cfg.heldout_pairs;
        let negatives = (0..cfg.negative_pairs)
            .map(|i| {
                let mut rng = pair_rng(cfg.seed, offset + i);
                let a = synthetic_base(&cfg.pair, &mut rng)?;
                let b = synthetic_base(&cfg.pair, &mut rng)?;
                make_negative_pair(&a, &b, &cfg.pair, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut transform_counts: BTreeMap<TransformKind, usize> = TransformKind::ALL.iter().map(|&k| (k, 0)).collect();
        for p in train.iter().chain(&heldout) {
            for t in &p.transforms {
                *transform_counts.entry(t.kind()).or_default() += 1;
            }
        }
        let manifest = Manifest {
            seed: cfg.seed,
            train_pairs: train.len(),
            heldout_pairs: heldout.len(),
            negative_pairs: negatives.len(),
            transform_counts,
            config: cfg.clone(),
        };
        Ok(Self { train, heldout, negatives, manifest })
    }

    /// Ground-truth segment pairs of the held-out positives.
    pub fn heldout_ground_truth(&self) -> Vec<GroundTruthPair> {
        self.heldout
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let (q, r) = heldout_ids(i);
                p.ground_truth(&q, &r)
            })
            .collect()
    }
}
