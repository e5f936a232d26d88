//! Central finite-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::Tensor;

/// Denominator floor when forming relative errors of near-zero gradients.
const REL_FLOOR: f64 = 1e-6;

/// Deterministic projection weights in `±[0.5, 1.5)`, so that a non-scalar
/// output reduces to a scalar whose gradient is generic (a plain sum would
/// hide e.g. softmax gradients, which sum to zero).
fn projection(len: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15_u64;
    (0..len)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            let u = (z >> 11) as f64 / (1u64 << 53) as f64;
            let mag = 0.5 + u;
            if z & 1 == 0 { mag } else { -mag }
        })
        .collect()
}

fn objective<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let w = projection(g.value(out).len());
    Ok(g.value(out).data().iter().zip(&w).map(|(a, b)| a * b).sum())
}

/// Slopes of the two one-sided differences disagreeing by more than this
/// fraction mark a probe that straddles a kink (e.g. a ReLU crossing zero).
const KINK_RATIO: f64 = 1e-3;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over the probes that were compared.
    pub max_rel_error: f64,
    pub probes: usize,
    /// Probes excluded because the objective is not smooth within `±epsilon`.
    pub kinks: usize,
}

/// Maximum element-wise relative error between reverse-mode gradients and
/// central differences `(f(x+eps) - f(x-eps)) / 2eps`, over every input element.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    grad_check_sampled(f, inputs, epsilon, usize::MAX).map(|r| r.max_rel_error)
}

/// Like [`grad_check`], but probes at most `max_per_input` evenly spaced
/// elements of each input and skips probes that straddle a kink.
pub fn grad_check_sampled<F>(f: F, inputs: &[Tensor<f64>], epsilon: f64, max_per_input: usize) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let w = Tensor::new(g.shape(out), projection(g.value(out).len()))?;
    let projected = g.mul_const(out, w)?;
    let total = g.sum(projected);
    let center = g.value(total).data()[0];
    let grads = g.backward(total)?;

    let mut report = GradCheckReport::default();
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let zero = Tensor::zeros(input.shape());
        let analytic = grads.get(vars[k]).unwrap_or(&zero);
        let stride = input.len().div_ceil(max_per_input.max(1)).max(1);
        for idx in (0..input.len()).step_by(stride) {
            let orig = input.data()[idx];
            probe[k].data_mut()[idx] = orig + epsilon;
            let plus = objective(&f, &probe)?;
            probe[k].data_mut()[idx] = orig - epsilon;
            let minus = objective(&f, &probe)?;
            probe[k].data_mut()[idx] = orig;
            let (fwd, bwd) = ((plus - center) / epsilon, (center - minus) / epsilon);
            if (fwd - bwd).abs() > KINK_RATIO * fwd.abs().max(bwd.abs()).max(REL_FLOOR) {
                report.kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.probes += 1;
        }
    }
    Ok(report)
}
