//! Detection over sequence pairs, dataset evaluation, ablation arms and the
//! threshold sweep.

use serde::{Deserialize, Serialize};

use crate::align::{segments_from_timestamps, weight_and_score, AlignConfig, AlignInput, AlignerRegistry, Weighting};
use crate::datagen::{heldout_ids, negative_ids, Dataset};
use crate::error::Result;
use crate::eval::{precision_recall_sweep, Detection, EvalReport, GroundTruthPair};
use crate::features::{spatial_similarity, FeatureSequence};
use crate::network::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectOptions {
    /// Registered aligner name (`sm` or `hv`).
    pub aligner: String,
    /// Apply the sequence encoder before computing similarities.
    pub encoder: bool,
    /// Use the mask map as `T`; otherwise `t ≡ 1` and starts come from `s > τ`.
    pub mask_map: bool,
    pub align: AlignConfig,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self { aligner: "sm".into(), encoder: true, mask_map: true, align: AlignConfig::default() }
    }
}

/// Runs the pipeline on one query/reference pair; detections are sorted by
/// descending score.
pub fn detect(
    net: &Network,
    registry: &AlignerRegistry,
    query: &FeatureSequence,
    reference: &FeatureSequence,
    ids: (&str, &str),
    opts: &DetectOptions,
) -> Result<Vec<Detection>> {
    opts.align.validate()?;
    let aligner = registry.get(&opts.aligner)?;
    net.check_dim(query)?;
    net.check_dim(reference)?;
    let query = query.l2_normalize()?;
    let reference = reference.l2_normalize()?;
    let use_encoder = opts.encoder && net.config.encoder.is_some();
    let similarity = if use_encoder { net.similarity(&query, &reference)? } else { spatial_similarity(&query, &reference)? };
    let needs_maps = opts.mask_map || opts.aligner != "hv";
    let maps = if needs_maps { Some(crate::model::predict_maps(&net.params, &similarity)?) } else { None };
    let mask = if opts.mask_map { maps.as_ref().map(|m| &m.0) } else { None };
    let input = AlignInput { similarity: &similarity, mask, step: maps.as_ref().map(|m| &m.1) };
    let paths = aligner.align(&input, &opts.align)?;
    let paths = weight_and_score(paths, &similarity, mask, &opts.align)?;
    paths
        .iter()
        .map(|p| {
            let (q, r) = segments_from_timestamps(p, query.timestamps(), reference.timestamps())?;
            Ok(Detection { query_id: ids.0.to_string(), ref_id: ids.1.to_string(), q, r, score: p.score })
        })
        .collect()
}

/// Detections on every held-out positive and negative pair of a dataset.
pub fn detect_dataset(net: &Network, registry: &AlignerRegistry, data: &Dataset, opts: &DetectOptions) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (k, p) in data.heldout.iter().enumerate() {
        let (q, r) = heldout_ids(k);
        out.extend(detect(net, registry, &p.anchor, &p.positive, (&q, &r), opts)?);
    }
    for (k, p) in data.negatives.iter().enumerate() {
        let (q, r) = negative_ids(k);
        out.extend(detect(net, registry, &p.anchor, &p.positive, (&q, &r), opts)?);
    }
    Ok(out)
}

/// IoU thresholds of the evaluation protocol.
pub const IOU_THRESHOLDS: [f64; 4] = [0.0, 0.3, 0.5, 0.7];

pub fn evaluate(dets: &[Detection], gts: &[GroundTruthPair], iou_thresholds: &[f64]) -> Result<Vec<EvalReport>> {
    iou_thresholds.iter().map(|&t| precision_recall_sweep(dets, gts, t)).collect()
}

/// One ablation configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub aligner: String,
    pub encoder: bool,
    pub weighting: Weighting,
    pub mask_map: bool,
}

impl Arm {
    pub fn options(&self, base: &AlignConfig) -> DetectOptions {
        DetectOptions {
            aligner: self.aligner.clone(),
            encoder: self.encoder,
            mask_map: self.mask_map,
            align: AlignConfig { weighting: self.weighting, ..base.clone() },
        }
    }
}

/// Baseline through the full method, each arm adding one component.
pub fn ablation_arms() -> Vec<Arm> {
    let arm = |name: &str, aligner: &str, encoder, weighting, mask_map| Arm {
        name: name.into(),
        aligner: aligner.into(),
        encoder,
        weighting,
        mask_map,
    };
    vec![
        arm("HV", "hv", false, Weighting::Hard, false),
        arm("HV+SE", "hv", true, Weighting::Hard, false),
        arm("HV+SE+SW", "hv", true, Weighting::Soft, false),
        arm("SM+SE+SW", "sm", true, Weighting::Soft, false),
        arm("SM+SE+SW+MM", "sm", true, Weighting::Soft, true),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    /// Best F1 per IoU threshold, aligned with `iou_thresholds`.
    pub f1: Vec<f64>,
    pub iou_thresholds: Vec<f64>,
}

pub fn run_ablation(
    net: &Network,
    registry: &AlignerRegistry,
    data: &Dataset,
    base: &AlignConfig,
    iou_thresholds: &[f64],
) -> Result<Vec<ArmResult>> {
    let gts = data.heldout_ground_truth();
    ablation_arms()
        .into_iter()
        .map(|arm| {
            let dets = detect_dataset(net, registry, data, &arm.options(base))?;
            let reports = evaluate(&dets, &gts, iou_thresholds)?;
            Ok(ArmResult { f1: reports.iter().map(|r| r.best_f1).collect(), iou_thresholds: iou_thresholds.to_vec(), arm })
        })
        .collect()
}

pub const TAU_GRID: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
pub const SIGMA_GRID: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
pub const GAMMA_GRID: [f64; 4] = [10.0, 100.0, 500.0, 1000.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// `tau`, `sigma` or `gamma`.
    pub parameter: String,
    pub value: f64,
    pub f1: f64,
}

/// Varies τ, σ and γ one at a time around `base`; best F1 at `iou_threshold`.
pub fn parameter_sweep(
    net: &Network,
    registry: &AlignerRegistry,
    data: &Dataset,
    base: &DetectOptions,
    iou_threshold: f64,
) -> Result<Vec<SweepPoint>> {
    let gts = data.heldout_ground_truth();
    let mut points = Vec::new();
    let grids: [(&str, &[f64]); 3] = [("tau", &TAU_GRID), ("sigma", &SIGMA_GRID), ("gamma", &GAMMA_GRID)];
    for (name, grid) in grids {
        for &value in grid {
            let mut opts = base.clone();
            match name {
                "tau" => opts.align.tau = value,
                "sigma" => opts.align.sigma = value,
                _ => opts.align.gamma = value,
            }
            let dets = detect_dataset(net, registry, data, &opts)?;
            let f1 = precision_recall_sweep(&dets, &gts, iou_threshold)?.best_f1;
            points.push(SweepPoint { parameter: name.into(), value, f1 });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arms_progress_one_component_at_a_time() {
        let arms = ablation_arms();
        assert_eq!(arms.len(), 5);
        assert_eq!((arms[0].aligner.as_str(), arms[0].encoder, arms[0].weighting), ("hv", false, Weighting::Hard));
        let full = &arms[4];
        assert_eq!((full.aligner.as_str(), full.encoder, full.weighting, full.mask_map), ("sm", true, Weighting::Soft, true));
        assert!(!arms[3].mask_map);
    }
}
