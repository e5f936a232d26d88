//! Single transformer encoder layer applied along the frame axis.
//!
//! Post-norm layout: attention, add & norm, feed-forward, add & norm. No
//! positional embedding. Inputs and outputs are row-normalized, so the output
//! keeps the `M×W` shape of its input.

use copyalign_tensor::{fan_in_uniform, scaled_dot_attention, Bound, Graph, ParamStore, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Feature dimension `W`.
    pub model_dim: usize,
    pub heads: usize,
    /// Width of the feed-forward hidden layer.
    pub hidden_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { model_dim: 32, heads: 2, hidden_dim: 64 }
    }
}

impl EncoderConfig {
    /// Dimensions of the larger published setup.
    pub fn full_scale() -> Self {
        Self { model_dim: 512, heads: 8, hidden_dim: 1024 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter names with their shapes and fan-in (`None` for layer-norm affine).
fn layout(cfg: &EncoderConfig) -> Vec<(&'static str, Vec<usize>, Option<usize>)> {
    let (w, h) = (cfg.model_dim, cfg.hidden_dim);
    vec![
        ("encoder.query.weight", vec![w, w], Some(w)),
        ("encoder.query.bias", vec![w], None),
        ("encoder.key.weight", vec![w, w], Some(w)),
        ("encoder.key.bias", vec![w], None),
        ("encoder.value.weight", vec![w, w], Some(w)),
        ("encoder.value.bias", vec![w], None),
        ("encoder.out.weight", vec![w, w], Some(w)),
        ("encoder.out.bias", vec![w], None),
        ("encoder.norm1.gamma", vec![w], None),
        ("encoder.norm1.beta", vec![w], None),
        ("encoder.ff1.weight", vec![w, h], Some(w)),
        ("encoder.ff1.bias", vec![h], None),
        ("encoder.ff2.weight", vec![h, w], Some(h)),
        ("encoder.ff2.bias", vec![w], None),
        ("encoder.norm2.gamma", vec![w], None),
        ("encoder.norm2.beta", vec![w], None),
    ]
}

pub(crate) fn param_shapes(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n.to_string(), s)).collect()
}

/// Adds encoder parameters to `store`: fan-in uniform weights, zero biases,
/// unit layer-norm gains.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &EncoderConfig, rng: &mut R) -> Result<()> {
    cfg.validate()?;
    for (name, shape, fan_in) in layout(cfg) {
        let value = match fan_in {
            Some(f) => fan_in_uniform(&shape, f, rng),
            None if name.ends_with("gamma") => Tensor::ones(&shape),
            None => Tensor::zeros(&shape),
        };
        store.add(name, value)?;
    }
    Ok(())
}

fn linear<T: Scalar>(g: &mut Graph<T>, b: &Bound, x: Var, prefix: &str) -> Result<Var> {
    let w = b.get(&format!("{prefix}.weight"))?;
    let bias = b.get(&format!("{prefix}.bias"))?;
    let y = g.matmul(x, w)?;
    Ok(g.add_row_bias(y, bias)?)
}

/// Encodes a row-normalized `M×W` sequence; the result is row-normalized.
pub fn forward<T: Scalar>(g: &mut Graph<T>, b: &Bound, cfg: &EncoderConfig, x: Var) -> Result<Var> {
    let (_, w) = g.value(x).dims2()?;
    if w != cfg.model_dim {
        return Err(Error::Config(format!("feature dim {w} does not match encoder model_dim {}", cfg.model_dim)));
    }
    let eps = T::from_f64_lossy(LN_EPS);
    let q = linear(g, b, x, "encoder.query")?;
    let k = linear(g, b, x, "encoder.key")?;
    let v = linear(g, b, x, "encoder.value")?;
    let attn = scaled_dot_attention(g, q, k, v, cfg.heads)?;
    let attn = linear(g, b, attn, "encoder.out")?;
    let res1 = g.add(x, attn)?;
    let h = g.layer_norm(res1, b.get("encoder.norm1.gamma")?, b.get("encoder.norm1.beta")?, eps)?;
    let ff = linear(g, b, h, "encoder.ff1")?;
    let ff = g.relu(ff);
    let ff = linear(g, b, ff, "encoder.ff2")?;
    let res2 = g.add(h, ff)?;
    let y = g.layer_norm(res2, b.get("encoder.norm2.gamma")?, b.get("encoder.norm2.beta")?, eps)?;
    Ok(g.l2_normalize_rows(y)?)
}
