//! Dataset directory layout:
//!
//! ```text
//! manifest.json
//! annotations.json                 held-out ground truth
//! train/train_00000_{a,p}.vsfq     + train_00000.labels.json
//! heldout/heldout_00000_{a,p}.vsfq + heldout_00000.labels.json
//! negatives/negative_00000_{a,p}.vsfq + negative_00000.labels.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_features, read_json, write_features, write_json};
use crate::datagen::{heldout_ids, negative_ids, Dataset, Manifest, MatchSet, NegativePair, TemporalTransform, TrainingPair};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

/// Per-pair labels: `R` as index pairs and step targets as `(i, j, l, d)` records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub anchor_len: usize,
    pub positive_len: usize,
    pub matches: Vec<(usize, usize)>,
    pub step_targets: Vec<(usize, usize, usize, f32)>,
    pub anchor_origin: Vec<Option<usize>>,
    pub positive_origin: Vec<Option<usize>>,
    pub transforms: [TemporalTransform; 2],
}

impl LabelsFile {
    fn from_pair(p: &TrainingPair) -> Self {
        Self {
            anchor_len: p.anchor.len(),
            positive_len: p.positive.len(),
            matches: p.match_set.pairs().iter().copied().collect(),
            step_targets: p.step_targets.records(),
            anchor_origin: p.anchor_origin.clone(),
            positive_origin: p.positive_origin.clone(),
            transforms: p.transforms,
        }
    }

    fn from_negative(p: &NegativePair) -> Self {
        Self {
            anchor_len: p.anchor.len(),
            positive_len: p.positive.len(),
            matches: Vec::new(),
            step_targets: Vec::new(),
            anchor_origin: vec![None; p.anchor.len()],
            positive_origin: vec![None; p.positive.len()],
            transforms: p.transforms,
        }
    }
}

fn train_ids(index: usize) -> (String, String) {
    (format!("train_{index:05}_a"), format!("train_{index:05}_p"))
}

fn stem(ids: &(String, String)) -> &str {
    ids.0.strip_suffix("_a").unwrap_or(&ids.0)
}

struct Split {
    dir: &'static str,
    ids: fn(usize) -> (String, String),
}

const TRAIN: Split = Split { dir: "train", ids: train_ids };
const HELDOUT: Split = Split { dir: "heldout", ids: heldout_ids };
const NEGATIVES: Split = Split { dir: "negatives", ids: negative_ids };

impl Split {
    fn paths(&self, root: &Path, index: usize) -> (PathBuf, PathBuf, PathBuf) {
        let ids = (self.ids)(index);
        let dir = root.join(self.dir);
        (
            dir.join(format!("{}.vsfq", ids.0)),
            dir.join(format!("{}.vsfq", ids.1)),
            dir.join(format!("{}.labels.json", stem(&ids))),
        )
    }
}

pub fn write_dataset(root: &Path, data: &Dataset) -> Result<()> {
    let write_split = |split: &Split, pairs: &[TrainingPair]| -> Result<()> {
        for (k, p) in pairs.iter().enumerate() {
            let (a, b, l) = split.paths(root, k);
            write_features(&a, &p.anchor)?;
            write_features(&b, &p.positive)?;
            write_json(&l, &LabelsFile::from_pair(p))?;
        }
        Ok(())
    };
    write_split(&TRAIN, &data.train)?;
    write_split(&HELDOUT, &data.heldout)?;
    for (k, p) in data.negatives.iter().enumerate() {
        let (a, b, l) = NEGATIVES.paths(root, k);
        write_features(&a, &p.anchor)?;
        write_features(&b, &p.positive)?;
        write_json(&l, &LabelsFile::from_negative(p))?;
    }
    write_json(&root.join(ANNOTATIONS_FILE), &data.heldout_ground_truth())?;
    write_json(&root.join(MANIFEST_FILE), &data.manifest)
}

/// Reads a labels file and checks it against the stored origins.
pub fn read_labels(path: &Path) -> Result<LabelsFile> {
    let labels: LabelsFile = read_json(path)?;
    let stored = MatchSet::new(labels.matches.iter().copied(), labels.anchor_len, labels.positive_len)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if stored != MatchSet::from_origins(&labels.anchor_origin, &labels.positive_origin) {
        return Err(Error::format(path, "match set disagrees with origin ids"));
    }
    Ok(labels)
}

fn read_pair(split: &Split, root: &Path, index: usize) -> Result<TrainingPair> {
    let (a, b, l) = split.paths(root, index);
    let labels = read_labels(&l)?;
    let pair = TrainingPair::from_parts(read_features(&a)?, read_features(&b)?, labels.anchor_origin, labels.positive_origin, labels.transforms)
        .map_err(|e| Error::format(&l, e.to_string()))?;
    if pair.step_targets.records() != labels.step_targets {
        return Err(Error::format(&l, "step targets disagree with the match set"));
    }
    Ok(pair)
}

pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(&root.join(MANIFEST_FILE))?;
    let train = (0..manifest.train_pairs).map(|k| read_pair(&TRAIN, root, k)).collect::<Result<Vec<_>>>()?;
    let heldout = (0..manifest.heldout_pairs).map(|k| read_pair(&HELDOUT, root, k)).collect::<Result<Vec<_>>>()?;
    let negatives = (0..manifest.negative_pairs)
        .map(|k| {
            let (a, b, l) = NEGATIVES.paths(root, k);
            let labels = read_labels(&l)?;
            Ok(NegativePair { anchor: read_features(&a)?, positive: read_features(&b)?, transforms: labels.transforms })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { train, heldout, negatives, manifest })
}
