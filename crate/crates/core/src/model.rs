//! Mask-Step CNN: a three-stage convolutional backbone over the similarity
//! matrix with a mask head (temporal similarity) and a step head (directions).
//!
//! | layer | kernel / pad | output        | activation |
//! |-------|--------------|---------------|------------|
//! | conv1 | 3×3 / 1      | M×N×8         | ReLU       |
//! | conv2 | 3×3 / 1      | M×N×16        | ReLU       |
//! | conv3 | 3×3 / 1      | M×N×32        | ReLU       |
//! | mask  | 3×3 / 1      | M×N×2         | softmax    |
//! | step  | 2×2 / 0      | (M−1)×(N−1)×3 | softmax    |

use copyalign_tensor::{fan_in_uniform, Bound, Graph, ParamStore, Scalar, Tensor, Var};
use rand::Rng;

use crate::datagen::StepTargets;
use crate::error::{Error, Result};
use crate::features::SimilarityMatrix;

/// Probability floor applied before taking logs in both losses.
pub const PROB_FLOOR: f64 = 1e-7;

pub const STEP_CATEGORIES: usize = 3;

/// (name, out channels, in channels, kernel, padding)
const LAYERS: [(&str, usize, usize, usize, usize); 5] = [
    ("cnn.conv1", 8, 1, 3, 1),
    ("cnn.conv2", 16, 8, 3, 1),
    ("cnn.conv3", 32, 16, 3, 1),
    ("cnn.mask", 2, 32, 3, 1),
    ("cnn.step", 3, 32, 2, 0),
];

pub(crate) fn param_shapes() -> Vec<(String, Vec<usize>)> {
    LAYERS
        .iter()
        .flat_map(|&(name, co, ci, k, _)| {
            [(format!("{name}.weight"), vec![co, ci, k, k]), (format!("{name}.bias"), vec![co])]
        })
        .collect()
}

pub fn init_params<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
    for &(name, co, ci, k, _) in &LAYERS {
        store.add(format!("{name}.weight"), fan_in_uniform(&[co, ci, k, k], ci * k * k, rng))?;
        store.add(format!("{name}.bias"), Tensor::zeros(&[co]))?;
    }
    Ok(())
}

/// Graph handles of the two heads.
#[derive(Clone, Copy, Debug)]
pub struct MaskStepVars {
    /// `2×M×N`, channel 1 is the foreground probability.
    pub mask_probs: Var,
    /// `3×(M−1)×(N−1)`.
    pub step_probs: Var,
}

fn conv<T: Scalar>(g: &mut Graph<T>, b: &Bound, x: Var, layer: usize) -> Result<Var> {
    let (name, _, _, _, pad) = LAYERS[layer];
    let w = b.get(&format!("{name}.weight"))?;
    let bias = b.get(&format!("{name}.bias"))?;
    Ok(g.conv2d(x, w, bias, pad)?)
}

/// Runs the CNN on an `M×N` similarity variable.
pub fn forward<T: Scalar>(g: &mut Graph<T>, b: &Bound, similarity: Var) -> Result<MaskStepVars> {
    let (m, n) = g.value(similarity).dims2()?;
    if m < 2 || n < 2 {
        return Err(Error::InputTooSmall { rows: m, cols: n });
    }
    let mut x = g.reshape(similarity, &[1, m, n])?;
    for layer in 0..3 {
        let y = conv(g, b, x, layer)?;
        x = g.relu(y);
    }
    let mask_logits = conv(g, b, x, 3)?;
    let step_logits = conv(g, b, x, 4)?;
    Ok(MaskStepVars {
        mask_probs: g.softmax(mask_logits, 0)?,
        step_probs: g.softmax(step_logits, 0)?,
    })
}

fn clamped_count<T: Scalar>(values: &[T], weights: &[T]) -> usize {
    let floor = T::from_f64_lossy(PROB_FLOOR);
    values.iter().zip(weights).filter(|(&p, &w)| w > T::zero() && p <= floor).count()
}

/// A loss variable plus the number of supervised positions whose probability
/// hit the clamp floor.
#[derive(Clone, Copy, Debug)]
pub struct LossVar {
    pub var: Var,
    pub clamped: usize,
}

/// Binary cross-entropy over all `M·N` positions:
/// `-(1/MN) (Σ_{∉R} ln y⁰ + Σ_{∈R} ln y¹)`.
///
/// `label` is the `M×N` indicator of the match set.
pub fn mask_loss<T: Scalar>(g: &mut Graph<T>, mask_probs: Var, label: &Tensor<f32>) -> Result<LossVar> {
    let (c, m, n) = g.value(mask_probs).dims3()?;
    if c != 2 || label.shape() != [m, n] {
        return Err(Error::Dimension(format!(
            "mask probabilities {:?} vs label {:?}",
            g.shape(mask_probs),
            label.shape()
        )));
    }
    let mut weights = Vec::with_capacity(2 * m * n);
    weights.extend(label.data().iter().map(|&l| T::from_f64_lossy(1.0 - l as f64)));
    weights.extend(label.data().iter().map(|&l| T::from_f64_lossy(l as f64)));
    let clamped = clamped_count(g.value(mask_probs).data(), &weights);
    let logs = g.ln_clamped(mask_probs, T::from_f64_lossy(PROB_FLOOR));
    let weighted = g.mul_const(logs, Tensor::new(&[2, m, n], weights)?)?;
    let total = g.sum(weighted);
    let var = g.scale(total, -T::one() / T::from_usize(m * n).unwrap());
    Ok(LossVar { var, clamped })
}

/// Cross-entropy over responsible positions only:
/// `-(1/Σd) Σ_Q d ln z`; zero when nothing is responsible.
pub fn step_loss<T: Scalar>(g: &mut Graph<T>, step_probs: Var, targets: &StepTargets) -> Result<LossVar> {
    let (c, r, k) = g.value(step_probs).dims3()?;
    if c != STEP_CATEGORIES || (r, k) != (targets.rows(), targets.cols()) {
        return Err(Error::Dimension(format!(
            "step probabilities {:?} vs targets {}x{}",
            g.shape(step_probs),
            targets.rows(),
            targets.cols()
        )));
    }
    let dense: Tensor<T> = targets.to_dense().cast();
    let mass = dense.sum();
    if mass == T::zero() {
        let zero = g.constant(Tensor::scalar(T::zero()));
        return Ok(LossVar { var: zero, clamped: 0 });
    }
    let clamped = clamped_count(g.value(step_probs).data(), dense.data());
    let logs = g.ln_clamped(step_probs, T::from_f64_lossy(PROB_FLOOR));
    let weighted = g.mul_const(logs, dense)?;
    let total = g.sum(weighted);
    let var = g.scale(total, -T::one() / mass);
    Ok(LossVar { var, clamped })
}

/// `L = L_m + λ L_s`
pub fn total_loss<T: Scalar>(g: &mut Graph<T>, mask: Var, step: Var, lambda: f64) -> Result<Var> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    let weighted = g.scale(step, T::from_f64_lossy(lambda));
    Ok(g.add(mask, weighted)?)
}

/// Foreground probability per frame pair (the temporal similarity `T`).
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMap {
    values: Tensor<f32>,
}

impl MaskMap {
    pub fn new(values: Tensor<f32>) -> Result<Self> {
        values.dims2()?;
        Ok(Self { values })
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values.data()[i * self.cols() + j]
    }

    pub fn values(&self) -> &Tensor<f32> {
        &self.values
    }
}

/// Direction category per position: 0 right-down, 1 right, 2 down.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMap {
    rows: usize,
    cols: usize,
    categories: Vec<u8>,
    probs: Option<Tensor<f32>>,
}

impl StepMap {
    pub fn from_categories(rows: usize, cols: usize, categories: Vec<u8>) -> Result<Self> {
        if categories.len() != rows * cols || categories.iter().any(|&c| c as usize >= STEP_CATEGORIES) {
            return Err(Error::Dimension(format!("invalid step categories for a {rows}x{cols} map")));
        }
        Ok(Self { rows, cols, categories, probs: None })
    }

    /// Argmax over the category axis of a `3×R×C` tensor; ties go to the
    /// lowest category.
    pub fn from_probs(probs: Tensor<f32>) -> Result<Self> {
        let (c, rows, cols) = probs.dims3()?;
        if c != STEP_CATEGORIES {
            return Err(Error::Dimension(format!("expected 3 step channels, got {c}")));
        }
        let plane = rows * cols;
        let categories = (0..plane)
            .map(|p| {
                let mut best = 0;
                for l in 1..STEP_CATEGORIES {
                    if probs.data()[l * plane + p] > probs.data()[best * plane + p] {
                        best = l;
                    }
                }
                best as u8
            })
            .collect();
        Ok(Self { rows, cols, categories, probs: Some(probs) })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.categories[i * self.cols + j]
    }

    pub fn categories(&self) -> &[u8] {
        &self.categories
    }

    pub fn probs(&self) -> Option<&Tensor<f32>> {
        self.probs.as_ref()
    }
}

/// Converts head outputs into the mask map and step map.
pub fn maps_from_probs(mask_probs: &Tensor<f32>, step_probs: Tensor<f32>) -> Result<(MaskMap, StepMap)> {
    let (c, m, n) = mask_probs.dims3()?;
    if c != 2 {
        return Err(Error::Dimension(format!("expected 2 mask channels, got {c}")));
    }
    let fg = mask_probs.data()[m * n..].to_vec();
    Ok((MaskMap::new(Tensor::new(&[m, n], fg)?)?, StepMap::from_probs(step_probs)?))
}

/// Runs the CNN alone on a similarity matrix.
pub fn predict_maps(params: &ParamStore<f32>, s: &SimilarityMatrix) -> Result<(MaskMap, StepMap)> {
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let sv = g.constant(s.values().clone());
    let out = forward(&mut g, &b, sv)?;
    maps_from_probs(g.value(out.mask_probs), g.value(out.step_probs).clone())
}
