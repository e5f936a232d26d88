//! Random detection sets for evaluation properties.

use copyalign_core::{Detection, GroundTruthPair, Segment};
use proptest::prelude::*;

fn seg(a: f64, b: f64) -> Segment {
    Segment::new(a, b).unwrap()
}

pub fn arb_segment() -> impl Strategy<Value = Segment> {
    (0.0f64..20.0, 0.0f64..8.0).prop_map(|(s, l)| seg(s, s + l))
}

fn arb_gt() -> impl Strategy<Value = GroundTruthPair> {
    (0usize..3, arb_segment(), arb_segment()).prop_map(|(k, q, r)| GroundTruthPair {
        query_id: format!("q{k}"),
        ref_id: format!("r{k}"),
        q,
        r,
    })
}

fn arb_det() -> impl Strategy<Value = Detection> {
    (0usize..3, arb_segment(), arb_segment(), 0u32..20).prop_map(|(k, q, r, s)| Detection {
        query_id: format!("q{k}"),
        ref_id: format!("r{k}"),
        q,
        r,
        score: s as f64 / 20.0,
    })
}

/// Detections derived from ground truth by jittering both segments.
pub fn arb_case() -> impl Strategy<Value = (Vec<GroundTruthPair>, Vec<Detection>)> {
    prop::collection::vec(arb_gt(), 1..6).prop_flat_map(|gts| {
        let n = gts.len();
        let jittered = prop::collection::vec((0..n, -3.0f64..3.0, -3.0f64..3.0, 0.0f64..3.0, 0u32..20), 0..10);
        (Just(gts), jittered, prop::collection::vec(arb_det(), 0..5)).prop_map(|(gts, jit, noise)| {
            let mut dets: Vec<Detection> = jit
                .into_iter()
                .map(|(k, dq, dr, grow, s)| {
                    let g = &gts[k];
                    Detection {
                        query_id: g.query_id.clone(),
                        ref_id: g.ref_id.clone(),
                        q: seg(g.q.start + dq, g.q.end + dq + grow),
                        r: seg(g.r.start + dr, g.r.end + dr + grow),
                        score: s as f64 / 20.0,
                    }
                })
                .collect();
            dets.extend(noise);
            (gts, dets)
        })
    })
}
