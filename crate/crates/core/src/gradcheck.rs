//! Finite-difference checks of every differentiable building block and of the
//! full training loss.

use copyalign_tensor::{grad_check_sampled, GradCheckReport, Graph, Var, scaled_dot_attention, Bound, Tensor, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datagen::{make_training_pair, synthetic_sequence, PairConfig, TracedSequence, RAW_FPS};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::network::{pair_loss, Network, NetworkConfig};

pub const EPSILON: f64 = 1e-5;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Probed elements per parameter tensor in the full-model check.
pub const MODEL_SAMPLES: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub probes: usize,
    /// Probes skipped because they straddle a non-differentiable point.
    pub kinks: usize,
}

impl GradCheckCase {
    fn new(name: &str, report: GradCheckReport, tolerance: f64) -> Self {
        Self { name: name.into(), max_rel_error: report.max_rel_error, tolerance, probes: report.probes, kinks: report.kinks }
    }

    /// Requires the error bound and that most probes were actually compared.
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance && self.kinks * 10 < self.probes
    }
}

fn grad_check<F>(f: F, inputs: &[Tensor<f64>], epsilon: f64) -> copyalign_tensor::Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> copyalign_tensor::Result<Var>,
{
    grad_check_sampled(f, inputs, epsilon, usize::MAX)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

/// Per-operation checks on random inputs of side ≤ 8.
pub fn op_checks(seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut push = |name: &str, report: copyalign_tensor::Result<GradCheckReport>| -> Result<()> {
        cases.push(GradCheckCase::new(name, report?, OP_TOLERANCE));
        Ok(())
    };

    let (a, b) = (random(&[4, 3], &mut rng), random(&[3, 5], &mut rng));
    push("matmul", grad_check(|g, v| g.matmul(v[0], v[1]), &[a, b], EPSILON))?;

    let x = random(&[1, 6, 6], &mut rng);
    let k = random(&[8, 1, 3, 3], &mut rng);
    let bias = random(&[8], &mut rng);
    push("conv2d 3x3 pad 1", grad_check(|g, v| g.conv2d(v[0], v[1], v[2], 1), &[x, k, bias], EPSILON))?;

    let x = random(&[2, 5, 5], &mut rng);
    let k = random(&[3, 2, 2, 2], &mut rng);
    let bias = random(&[3], &mut rng);
    push("conv2d 2x2 pad 0", grad_check(|g, v| g.conv2d(v[0], v[1], v[2], 0), &[x, k, bias], EPSILON))?;

    // Keep entries away from the kink at zero.
    let x = random(&[5, 6], &mut rng).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    push("relu", grad_check(|g, v| Ok(g.relu(v[0])), &[x], EPSILON))?;

    let x = random(&[3, 4, 4], &mut rng);
    push("softmax", grad_check(|g, v| g.softmax(v[0], 0), &[x], EPSILON))?;

    let x = random(&[5, 8], &mut rng);
    let gamma = random(&[8], &mut rng);
    let beta = random(&[8], &mut rng);
    push("layer_norm", grad_check(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5), &[x, gamma, beta], EPSILON))?;

    let (q, k, v) = (random(&[6, 8], &mut rng), random(&[6, 8], &mut rng), random(&[6, 8], &mut rng));
    push("attention", grad_check(|g, x| scaled_dot_attention(g, x[0], x[1], x[2], 2), &[q, k, v], EPSILON))?;

    let x = random(&[4, 6], &mut rng);
    push("l2_normalize_rows", grad_check(|g, v| g.l2_normalize_rows(v[0]), &[x], EPSILON))?;

    Ok(cases)
}

/// Full loss `L_m + λ L_s` on one generated 8×8 pair, through the encoder,
/// the similarity product and both heads, w.r.t. every parameter tensor.
pub fn model_check(seed: u64) -> Result<GradCheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair_cfg = PairConfig { seq_len: 8, feature_dim: 8, raw_len_min: 12, raw_len_max: 20, ..Default::default() };
    let base = TracedSequence::raw(synthetic_sequence(16, 8, pair_cfg.correlation, RAW_FPS, &mut rng)?);
    let pair = make_training_pair(&base, &pair_cfg, &mut rng)?;
    let config = NetworkConfig { feature_dim: 8, encoder: Some(EncoderConfig { model_dim: 8, heads: 2, hidden_dim: 16 }) };
    let net: Network<f64> = Network::new(config, seed)?;
    let names = net.params.names();
    let inputs: Vec<Tensor<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
    let u: Tensor<f64> = pair.anchor.frames().cast();
    let v: Tensor<f64> = pair.positive.frames().cast();
    let report = grad_check_sampled(
        |g, vars| {
            let bound = Bound::from_pairs(&names, vars);
            let (uv, vv) = (g.constant(u.clone()), g.constant(v.clone()));
            pair_loss(g, &bound, &config, uv, vv, &pair.mask_label, &pair.step_targets, 1.0)
                .map(|l| l.total)
                .map_err(|e| TensorError::Dimension(e.to_string()))
        },
        &inputs,
        EPSILON,
        MODEL_SAMPLES,
    )?;
    Ok(GradCheckCase::new("full loss 8x8", report, MODEL_TOLERANCE))
}

pub fn run_grad_checks(seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut cases = op_checks(seed)?;
    cases.push(model_check(seed)?);
    Ok(cases)
}
