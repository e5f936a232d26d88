use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::Scalar;

/// Multi-head scaled dot-product attention over the row (sequence) axis.
///
/// `q`, `k`, `v` are `L×D`; each head sees a contiguous `D/heads` column block.
pub fn scaled_dot_attention<T: Scalar>(g: &mut Graph<T>, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let (_, d) = g.value(q).dims2()?;
    if heads == 0 || d % heads != 0 {
        return Err(TensorError::Dimension(format!("model dim {d} not divisible by {heads} heads")));
    }
    if g.shape(k) != g.shape(v) || g.shape(k)[1] != d {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            left: g.shape(q).to_vec(),
            right: g.shape(k).to_vec(),
        });
    }
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let weights = g.softmax(scores, 1)?;
        outs.push(g.matmul(weights, vh)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}
