//! Self-supervised pair generation: temporal edits with origin tracking,
//! feature perturbation, and exact mask/step labels.

mod labels;
mod pairs;
mod transform;

pub use labels::{mask_label, step_label, MatchSet, StepTargets};
pub use pairs::{
    feature_perturb, heldout_ids, make_negative_pair, make_training_pair, negative_ids, pair_rng, synthetic_sequence,
    try_pair, Dataset, GenConfig, Manifest, NegativePair, PairConfig, TrainingPair,
};
pub use transform::{
    TemporalTransform, TracedSequence, TransformKind, MAX_EDIT_FRAMES, MIN_RAW_FRAMES, RAW_FPS, SPEED_GRID, WORK_FPS,
};
