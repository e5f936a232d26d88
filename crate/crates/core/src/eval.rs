//! Segment-level precision, recall and best F1 over a score-threshold sweep.
//!
//! With an IoU threshold of 0 a detection is correct when it overlaps a
//! ground-truth pair on both axes (IoU > 0); otherwise both per-axis IoUs must
//! reach the threshold. Matching is one-to-one and greedy: detections in
//! descending score order each take the free ground-truth pair with the
//! highest minimum-axis IoU.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time interval in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start <= end) {
            return Err(Error::InvertedSegment { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// `|a ∩ b| / |a ∪ b|`, zero for disjoint or zero-length unions.
pub fn segment_iou(a: Segment, b: Segment) -> Result<f64> {
    for s in [a, b] {
        if !(s.start <= s.end) {
            return Err(Error::InvertedSegment { start: s.start, end: s.end });
        }
    }
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    Ok(if union > 0.0 { inter / union } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "GroundTruthRecord", into = "GroundTruthRecord")]
pub struct GroundTruthPair {
    pub query_id: String,
    pub ref_id: String,
    pub q: Segment,
    pub r: Segment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "DetectionRecord", into = "DetectionRecord")]
pub struct Detection {
    pub query_id: String,
    pub ref_id: String,
    pub q: Segment,
    pub r: Segment,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRecord {
    query_id: String,
    ref_id: String,
    q_start: f64,
    q_end: f64,
    r_start: f64,
    r_end: f64,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    query_id: String,
    ref_id: String,
    q_start: f64,
    q_end: f64,
    r_start: f64,
    r_end: f64,
    score: f64,
}

impl From<GroundTruthRecord> for GroundTruthPair {
    fn from(r: GroundTruthRecord) -> Self {
        Self {
            query_id: r.query_id,
            ref_id: r.ref_id,
            q: Segment { start: r.q_start, end: r.q_end },
            r: Segment { start: r.r_start, end: r.r_end },
        }
    }
}

impl From<GroundTruthPair> for GroundTruthRecord {
    fn from(g: GroundTruthPair) -> Self {
        Self { query_id: g.query_id, ref_id: g.ref_id, q_start: g.q.start, q_end: g.q.end, r_start: g.r.start, r_end: g.r.end }
    }
}

impl From<DetectionRecord> for Detection {
    fn from(r: DetectionRecord) -> Self {
        Self {
            query_id: r.query_id,
            ref_id: r.ref_id,
            q: Segment { start: r.q_start, end: r.q_end },
            r: Segment { start: r.r_start, end: r.r_end },
            score: r.score,
        }
    }
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        Self {
            query_id: d.query_id,
            ref_id: d.ref_id,
            q_start: d.q.start,
            q_end: d.q.end,
            r_start: d.r.start,
            r_end: d.r.end,
            score: d.score,
        }
    }
}

impl GroundTruthPair {
    pub fn validate(&self) -> Result<()> {
        for s in [self.q, self.r] {
            if !(s.start < s.end) {
                return Err(Error::InvertedSegment { start: s.start, end: s.end });
            }
        }
        Ok(())
    }
}

/// Per-axis IoUs `(query, reference)` when both clear the protocol threshold.
fn qualifying_ious(det: &Detection, gt: &GroundTruthPair, iou_threshold: f64) -> Result<Option<(f64, f64)>> {
    let qi = segment_iou(det.q, gt.q)?;
    let ri = segment_iou(det.r, gt.r)?;
    let pass = |v: f64| if iou_threshold <= 0.0 { v > 0.0 } else { v >= iou_threshold };
    Ok((pass(qi) && pass(ri)).then_some((qi, ri)))
}

/// Index of the free ground-truth pair `det` is credited with, if any.
///
/// `taken[k]` marks ground-truth pairs already matched.
pub fn match_detection(det: &Detection, gts: &[GroundTruthPair], taken: &[bool], iou_threshold: f64) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, gt) in gts.iter().enumerate() {
        if taken.get(k).copied().unwrap_or(false) || gt.query_id != det.query_id || gt.ref_id != det.ref_id {
            continue;
        }
        if let Some((qi, ri)) = qualifying_ious(det, gt, iou_threshold)? {
            let m = qi.min(ri);
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((k, m));
            }
        }
    }
    Ok(best.map(|(k, _)| k))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub score_threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub retained: usize,
    pub correct: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub ground_truth: usize,
    pub detections: usize,
    pub operating_points: Vec<OperatingPoint>,
    pub best_f1: f64,
    /// Operating point achieving `best_f1` (lowest threshold on ties).
    pub best: Option<OperatingPoint>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Orders detections by descending score; ties keep input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Precision/recall at one score threshold (detections with `score >= threshold`).
pub fn operating_point(
    dets: &[Detection],
    gts: &[GroundTruthPair],
    score_threshold: f64,
    iou_threshold: f64,
) -> Result<OperatingPoint> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let order = score_order(dets);
    let by_pair = group_ground_truth(gts);
    evaluate_prefix(dets, gts, &by_pair, &order, score_threshold, iou_threshold)
}

type PairIndex<'a> = HashMap<(&'a str, &'a str), Vec<usize>>;

fn group_ground_truth(gts: &[GroundTruthPair]) -> PairIndex<'_> {
    let mut map: PairIndex<'_> = HashMap::new();
    for (k, g) in gts.iter().enumerate() {
        map.entry((g.query_id.as_str(), g.ref_id.as_str())).or_default().push(k);
    }
    map
}

fn evaluate_prefix(
    dets: &[Detection],
    gts: &[GroundTruthPair],
    by_pair: &PairIndex<'_>,
    order: &[usize],
    score_threshold: f64,
    iou_threshold: f64,
) -> Result<OperatingPoint> {
    let mut taken = vec![false; gts.len()];
    let mut retained = 0;
    let mut correct = 0;
    for &d in order {
        let det = &dets[d];
        if det.score < score_threshold {
            break;
        }
        retained += 1;
        let Some(candidates) = by_pair.get(&(det.query_id.as_str(), det.ref_id.as_str())) else { continue };
        let mut best: Option<(usize, f64)> = None;
        for &k in candidates {
            if taken[k] {
                continue;
            }
            if let Some((qi, ri)) = qualifying_ious(det, &gts[k], iou_threshold)? {
                let m = qi.min(ri);
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((k, m));
                }
            }
        }
        if let Some((k, _)) = best {
            taken[k] = true;
            correct += 1;
        }
    }
    let precision = if retained > 0 { correct as f64 / retained as f64 } else { 0.0 };
    let recall = correct as f64 / gts.len() as f64;
    Ok(OperatingPoint { score_threshold, precision, recall, f1: f1_score(precision, recall), retained, correct })
}

/// Sweeps every distinct detection score as a threshold.
pub fn precision_recall_sweep(dets: &[Detection], gts: &[GroundTruthPair], iou_threshold: f64) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let order = score_order(dets);
    let by_pair = group_ground_truth(gts);
    let mut thresholds: Vec<f64> = dets.iter().map(|d| d.score).collect();
    thresholds.sort_by(|a, b| a.total_cmp(b));
    thresholds.dedup();
    let points = thresholds
        .iter()
        .map(|&t| evaluate_prefix(dets, gts, &by_pair, &order, t, iou_threshold))
        .collect::<Result<Vec<_>>>()?;
    let best = points.iter().copied().fold(None::<OperatingPoint>, |acc, p| match acc {
        Some(a) if a.f1 >= p.f1 => Some(a),
        _ => Some(p),
    });
    Ok(EvalReport {
        iou_threshold,
        ground_truth: gts.len(),
        detections: dets.len(),
        best_f1: best.map_or(0.0, |b| b.f1),
        operating_points: points,
        best,
    })
}

/// CSV sweep table: `score_threshold,precision,recall,f1,retained,correct`.
pub fn sweep_csv(report: &EvalReport) -> String {
    let mut out = String::from("score_threshold,precision,recall,f1,retained,correct\n");
    for p in &report.operating_points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.score_threshold, p.precision, p.recall, p.f1, p.retained, p.correct
        ));
    }
    out
}
