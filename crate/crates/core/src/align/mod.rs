//! Partial alignment: step-map-guided walking, the Hough-voting baseline,
//! path weighting and scoring.
//!
//! Aligners are selected at runtime by name through [`AlignerRegistry`].

mod hough;
mod step;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Segment;
use crate::features::SimilarityMatrix;
use crate::model::{MaskMap, StepMap};

pub use hough::{hough_voting_align, HoughAligner};
pub use step::{partial_align, walk_paths, StepAligner};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Soft,
    Hard,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Self::Soft),
            "hard" => Ok(Self::Hard),
            other => Err(Error::Config(format!("unknown weighting `{other}` (expected soft or hard)"))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Soft => "soft",
            Self::Hard => "hard",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Start-point threshold τ on the mask map.
    pub tau: f64,
    /// Per-pair threshold σ on `s·t`.
    pub sigma: f64,
    /// Soft-weight temperature γ.
    pub gamma: f64,
    /// Consecutive sub-σ cells that end a walk.
    pub gap_limit: usize,
    pub weighting: Weighting,
    /// Hard weighting drops paths shorter than this (in frames).
    pub hard_min_len: usize,
    /// Hough voting: minimum similarity of a candidate match.
    pub hv_threshold: f64,
    /// Hough voting: minimum matches per emitted offset bin.
    pub hv_vote_min: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            sigma: 0.1,
            gamma: 100.0,
            gap_limit: 3,
            weighting: Weighting::Soft,
            hard_min_len: 3,
            hv_threshold: 0.5,
            hv_vote_min: 3,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.tau) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !open_unit(self.sigma) {
            return Err(Error::Config(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.gap_limit == 0 {
            return Err(Error::Config("gap_limit must be positive".into()));
        }
        if self.hv_vote_min == 0 {
            return Err(Error::Config("hv_vote_min must be positive".into()));
        }
        Ok(())
    }
}

/// One partial alignment `P_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    /// Frame pairs `(i, j)` in walk order.
    pub pairs: Vec<(usize, usize)>,
    /// Soft weight α (1 under hard weighting).
    pub alpha: f64,
    /// Spatio-temporal similarity `Sim`.
    pub score: f64,
}

impl AlignmentPath {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs, alpha: 1.0, score: 0.0 }
    }

    /// `|P|`
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Inclusive index ranges `(min, max)` on both axes.
    pub fn spans(&self) -> Option<((usize, usize), (usize, usize))> {
        let &(i0, j0) = self.pairs.first()?;
        Some(self.pairs.iter().fold(((i0, i0), (j0, j0)), |((a, b), (c, d)), &(i, j)| {
            ((a.min(i), b.max(i)), (c.min(j), d.max(j)))
        }))
    }

    /// `‖P‖`: the shorter of the two covered index ranges, in frames.
    pub fn extent(&self) -> usize {
        self.spans().map_or(0, |((a, b), (c, d))| (b - a + 1).min(d - c + 1))
    }

    /// True when consecutive pairs advance by `(1,1)`, `(0,1)` or `(1,0)`.
    pub fn is_monotone_chain(&self) -> bool {
        self.pairs
            .windows(2)
            .all(|w| matches!((w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1)), (1, 1) | (0, 1) | (1, 0)))
    }
}

/// `α = 1 / (1 + γ e^{−‖P‖})`
pub fn soft_weight(extent: usize, gamma: f64) -> f64 {
    1.0 / (1.0 + gamma * (-(extent as f64)).exp())
}

/// `Sim = α/|P| · Σ s·t`; `t ≡ 1` without a mask map.
pub fn score(path: &AlignmentPath, s: &SimilarityMatrix, t: Option<&MaskMap>, alpha: f64) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut total = 0.0;
    for &(i, j) in &path.pairs {
        if i >= s.rows() || j >= s.cols() {
            return Err(Error::Dimension(format!("path pair ({i}, {j}) outside {}x{}", s.rows(), s.cols())));
        }
        total += s.get(i, j) as f64 * t.map_or(1.0, |t| t.get(i, j) as f64);
    }
    Ok(alpha * total / path.len() as f64)
}

/// Hard mode drops `‖P‖ < hard_min_len` and sets α = 1; soft mode keeps
/// every path with its soft weight.
pub fn weight_filter(paths: Vec<AlignmentPath>, cfg: &AlignConfig) -> Vec<AlignmentPath> {
    match cfg.weighting {
        Weighting::Hard => paths
            .into_iter()
            .filter(|p| p.extent() >= cfg.hard_min_len)
            .map(|p| AlignmentPath { alpha: 1.0, ..p })
            .collect(),
        Weighting::Soft => paths
            .into_iter()
            .map(|p| {
                let alpha = soft_weight(p.extent(), cfg.gamma);
                AlignmentPath { alpha, ..p }
            })
            .collect(),
    }
}

/// Weights, scores and sorts paths by descending score (stable).
pub fn weight_and_score(
    paths: Vec<AlignmentPath>,
    s: &SimilarityMatrix,
    t: Option<&MaskMap>,
    cfg: &AlignConfig,
) -> Result<Vec<AlignmentPath>> {
    let mut out = weight_filter(paths, cfg)
        .into_iter()
        .map(|p| {
            let score = score(&p, s, t, p.alpha)?;
            Ok(AlignmentPath { score, ..p })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// Segment pair spanned by a path's min/max frame indices at constant frame rates.
pub fn segments_from_path(path: &AlignmentPath, fps_u: f64, fps_v: f64) -> Result<(Segment, Segment)> {
    let ((a0, a1), (b0, b1)) = path.spans().ok_or(Error::EmptyPath)?;
    Ok((
        Segment::new(a0 as f64 / fps_u, a1 as f64 / fps_u)?,
        Segment::new(b0 as f64 / fps_v, b1 as f64 / fps_v)?,
    ))
}

/// Segment pair spanned by a path, read from explicit frame timestamps.
pub fn segments_from_timestamps(path: &AlignmentPath, ts_u: &[f64], ts_v: &[f64]) -> Result<(Segment, Segment)> {
    let ((a0, a1), (b0, b1)) = path.spans().ok_or(Error::EmptyPath)?;
    if a1 >= ts_u.len() || b1 >= ts_v.len() {
        return Err(Error::Dimension("path exceeds timestamp range".into()));
    }
    Ok((Segment::new(ts_u[a0], ts_u[a1])?, Segment::new(ts_v[b0], ts_v[b1])?))
}

/// Inputs shared by every aligner.
#[derive(Clone, Copy, Debug)]
pub struct AlignInput<'a> {
    pub similarity: &'a SimilarityMatrix,
    /// Temporal similarity; `None` means `t ≡ 1`.
    pub mask: Option<&'a MaskMap>,
    pub step: Option<&'a StepMap>,
}

/// Produces unweighted, unscored paths.
pub trait Aligner: Send + Sync {
    fn name(&self) -> &'static str;

    fn align(&self, input: &AlignInput<'_>, cfg: &AlignConfig) -> Result<Vec<AlignmentPath>>;
}

/// Named aligner strategies.
pub struct AlignerRegistry {
    aligners: BTreeMap<&'static str, Box<dyn Aligner>>,
}

impl AlignerRegistry {
    pub fn empty() -> Self {
        Self { aligners: BTreeMap::new() }
    }

    /// `sm` (step-map walk) and `hv` (Hough voting).
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(StepAligner));
        r.register(Box::new(HoughAligner));
        r
    }

    /// Replaces any aligner of the same name.
    pub fn register(&mut self, aligner: Box<dyn Aligner>) {
        self.aligners.insert(aligner.name(), aligner);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Aligner> {
        self.aligners.get(name).map(|a| a.as_ref()).ok_or_else(|| Error::UnknownAligner(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.aligners.keys().copied().collect()
    }
}

impl Default for AlignerRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
