//! Full network: optional sequence encoder, similarity matrix, Mask-Step CNN.

use copyalign_tensor::{Bound, Graph, ParamStore, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::StepTargets;
use crate::encoder::{self, EncoderConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, SimilarityMatrix};
use crate::model::{self, MaskMap, MaskStepVars, StepMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub feature_dim: usize,
    /// `None` computes similarities on the raw features.
    pub encoder: Option<EncoderConfig>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { feature_dim: 32, encoder: Some(EncoderConfig::default()) }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if let Some(enc) = &self.encoder {
            enc.validate()?;
            if enc.model_dim != self.feature_dim {
                return Err(Error::Config(format!(
                    "encoder model_dim {} differs from feature_dim {}",
                    enc.model_dim, self.feature_dim
                )));
            }
        }
        Ok(())
    }

    /// Expected parameter names and shapes, in store order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = self.encoder.as_ref().map(encoder::param_shapes).unwrap_or_default();
        shapes.extend(model::param_shapes());
        shapes
    }
}

/// Graph handles for one anchor/positive pair.
#[derive(Clone, Copy, Debug)]
pub struct PairVars {
    pub similarity: Var,
    pub heads: MaskStepVars,
}

/// `S = U'·V'ᵀ` with `U', V'` the (optionally encoded) sequences, then the CNN.
pub fn pair_forward<T: Scalar>(g: &mut Graph<T>, b: &Bound, cfg: &NetworkConfig, u: Var, v: Var) -> Result<PairVars> {
    let (u, v) = match &cfg.encoder {
        Some(enc) => (encoder::forward(g, b, enc, u)?, encoder::forward(g, b, enc, v)?),
        None => (u, v),
    };
    let vt = g.transpose(v)?;
    let similarity = g.matmul(u, vt)?;
    let heads = model::forward(g, b, similarity)?;
    Ok(PairVars { similarity, heads })
}

/// Loss handles for one pair.
#[derive(Clone, Copy, Debug)]
pub struct PairLossVars {
    pub total: Var,
    pub mask: Var,
    pub step: Var,
    /// Supervised probabilities that hit the log floor.
    pub clamped: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn pair_loss<T: Scalar>(
    g: &mut Graph<T>,
    b: &Bound,
    cfg: &NetworkConfig,
    u: Var,
    v: Var,
    mask_label: &Tensor<f32>,
    step_targets: &StepTargets,
    lambda: f64,
) -> Result<PairLossVars> {
    let out = pair_forward(g, b, cfg, u, v)?;
    let lm = model::mask_loss(g, out.heads.mask_probs, mask_label)?;
    let ls = model::step_loss(g, out.heads.step_probs, step_targets)?;
    let total = model::total_loss(g, lm.var, ls.var, lambda)?;
    Ok(PairLossVars { total, mask: lm.var, step: ls.var, clamped: lm.clamped + ls.clamped })
}

/// Inference outputs for one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub similarity: SimilarityMatrix,
    pub mask: MaskMap,
    pub step: StepMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f32> {
    pub config: NetworkConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Network<T> {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        if let Some(enc) = &config.encoder {
            encoder::init_params(&mut params, enc, &mut rng)?;
        }
        model::init_params(&mut params, &mut rng)?;
        Ok(Self { config, params })
    }

    /// Wraps loaded parameters after checking names and shapes.
    pub fn from_params(config: NetworkConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::Dimension(format!("expected {} parameters, found {}", expected.len(), params.len())));
        }
        for (name, shape) in &expected {
            let p = params.get(name).ok_or_else(|| Error::Dimension(format!("missing parameter {name}")))?;
            if p.value.shape() != shape.as_slice() {
                return Err(Error::Dimension(format!("parameter {name} has shape {:?}, expected {shape:?}", p.value.shape())));
            }
        }
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network { config: self.config, params: self.params.cast() }
    }

    /// Feature width must match the checkpoint; a mismatch is a configuration error.
    pub fn check_dim(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.dim() != self.config.feature_dim {
            return Err(Error::Config(format!(
                "feature dim {} does not match network feature_dim {}",
                seq.dim(),
                self.config.feature_dim
            )));
        }
        Ok(())
    }
}

impl Network<f32> {
    /// Similarity matrix after the encoder (or on raw features without one).
    pub fn similarity(&self, u: &FeatureSequence, v: &FeatureSequence) -> Result<SimilarityMatrix> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        let Some(enc) = &self.config.encoder else {
            return crate::features::spatial_similarity(u, v);
        };
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let uv = g.constant(u.frames().clone());
        let vv = g.constant(v.frames().clone());
        let ue = encoder::forward(&mut g, &b, enc, uv)?;
        let ve = encoder::forward(&mut g, &b, enc, vv)?;
        let s = g.value(ue).matmul(&g.value(ve).transpose2()?)?;
        SimilarityMatrix::new(s)
    }

    pub fn predict(&self, u: &FeatureSequence, v: &FeatureSequence) -> Result<Prediction> {
        let similarity = self.similarity(u, v)?;
        let (mask, step) = model::predict_maps(&self.params, &similarity)?;
        Ok(Prediction { similarity, mask, step })
    }

    /// Similarity plus maps computed from the raw features, bypassing the encoder.
    pub fn predict_without_encoder(&self, u: &FeatureSequence, v: &FeatureSequence) -> Result<Prediction> {
        let similarity = crate::features::spatial_similarity(u, v)?;
        let (mask, step) = model::predict_maps(&self.params, &similarity)?;
        Ok(Prediction { similarity, mask, step })
    }

    /// Evaluates the loss of one labeled pair without recording gradients.
    pub fn loss(&self, u: &FeatureSequence, v: &FeatureSequence, mask_label: &Tensor<f32>, step_targets: &StepTargets, lambda: f64) -> Result<f64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let uv = g.constant(u.frames().clone());
        let vv = g.constant(v.frames().clone());
        let l = pair_loss(&mut g, &b, &self.config, uv, vv, mask_label, step_targets, lambda)?;
        Ok(g.value(l.total).data()[0] as f64)
    }
}
