//! Run configuration file (TOML). Every key is optional; unset keys take the
//! published defaults, and command-line flags override the file.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! seq_len = 16
//! feature_dim = 32
//! perturb = 0.1
//! correlation = 0.8
//! train_pairs = 2000
//! heldout_pairs = 200
//! negative_pairs = 200
//!
//! [encoder]
//! enabled = true
//! heads = 2
//! hidden_dim = 64
//!
//! [train]
//! epochs = 8
//! batch_size = 16
//! learning_rate = 5e-4
//! decayed_learning_rate = 5e-5
//! momentum = 0.9
//! weight_decay = 1e-5
//! lambda = 1.0
//! reduction = "sum"
//!
//! [align]
//! tau = 0.3
//! sigma = 0.1
//! gamma = 100.0
//! gap_limit = 3
//! weighting = "soft"
//! hard_min_len = 3
//! hv_threshold = 0.5
//! hv_vote_min = 3
//!
//! [detect]
//! aligner = "sm"
//! mask_map = true
//! ```

use std::path::Path;

use copyalign_core::datagen::{GenConfig, PairConfig};
use copyalign_core::encoder::EncoderConfig;
use copyalign_core::{AlignConfig, DetectOptions, Error, NetworkConfig, Result, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub seq_len: usize,
    pub feature_dim: usize,
    pub perturb: f64,
    pub correlation: f64,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub negative_pairs: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let gen = GenConfig::default();
        Self {
            seq_len: gen.pair.seq_len,
            feature_dim: gen.pair.feature_dim,
            perturb: gen.pair.perturb,
            correlation: gen.pair.correlation,
            train_pairs: gen.train_pairs,
            heldout_pairs: gen.heldout_pairs,
            negative_pairs: gen.negative_pairs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub enabled: bool,
    pub heads: usize,
    pub hidden_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        Self { enabled: true, heads: enc.heads, hidden_dim: enc.hidden_dim }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub aligner: String,
    pub mask_map: bool,
}

impl Default for DetectSection {
    fn default() -> Self {
        let d = DetectOptions::default();
        Self { aligner: d.aligner, mask_map: d.mask_map }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, parameter initialization and shuffling.
    pub seed: u64,
    pub data: DataSection,
    pub encoder: EncoderSection,
    /// `train.seed` is ignored in favour of the top-level seed.
    pub train: TrainConfig,
    pub align: AlignConfig,
    pub detect: DetectSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: GenConfig::default().seed,
            data: DataSection::default(),
            encoder: EncoderSection::default(),
            train: TrainConfig::default(),
            align: AlignConfig::default(),
            detect: DetectSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text, path)
    }

    pub fn gen_config(&self) -> GenConfig {
        let d = &self.data;
        GenConfig {
            seed: self.seed,
            train_pairs: d.train_pairs,
            heldout_pairs: d.heldout_pairs,
            negative_pairs: d.negative_pairs,
            pair: PairConfig {
                seq_len: d.seq_len,
                feature_dim: d.feature_dim,
                perturb: d.perturb,
                correlation: d.correlation,
                ..PairConfig::default()
            },
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        let encoder = self.encoder.enabled.then_some(EncoderConfig {
            model_dim: self.data.feature_dim,
            heads: self.encoder.heads,
            hidden_dim: self.encoder.hidden_dim,
        });
        NetworkConfig { feature_dim: self.data.feature_dim, encoder }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            aligner: self.detect.aligner.clone(),
            encoder: self.encoder.enabled,
            mask_map: self.detect.mask_map,
            align: self.align.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("", Path::new("empty.toml")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!((cfg.align.tau, cfg.align.sigma, cfg.align.gamma), (0.3, 0.1, 100.0));
        assert_eq!((cfg.train.epochs, cfg.train.learning_rate, cfg.train.lambda), (8, 5e-4, 1.0));
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(RunConfig::parse(&doc, Path::new("doc")).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[data]\nlength = 3\n", Path::new("x")), Err(Error::Config(_))));
    }

    #[test]
    fn seed_reaches_every_stage() {
        let cfg = RunConfig::parse("seed = 99\n[train]\nseed = 1\n", Path::new("x")).unwrap();
        assert_eq!(cfg.gen_config().seed, 99);
        assert_eq!(cfg.train_config().seed, 99);
    }
}
