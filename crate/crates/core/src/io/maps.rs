use std::fmt::Write;
use std::path::Path;

use copyalign_tensor::Tensor;

use super::write_bytes;
use crate::error::Result;
use crate::model::StepMap;
use crate::network::Prediction;

/// Comma-separated rows of a 2-D tensor.
pub fn matrix_csv(values: &Tensor<f32>) -> String {
    let cols = values.shape().get(1).copied().unwrap_or(0).max(1);
    let mut out = String::new();
    for row in values.data().chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn step_csv(map: &StepMap) -> String {
    let mut out = String::new();
    for i in 0..map.rows() {
        let line: Vec<String> = (0..map.cols()).map(|j| map.get(i, j).to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Binary 8-bit grayscale PGM; values are clamped to `[0, 1]`.
pub fn pgm_bytes(values: &Tensor<f32>) -> Vec<u8> {
    let (h, w) = (values.shape()[0], values.shape().get(1).copied().unwrap_or(1));
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Writes `similarity.{csv,pgm}`, `mask.{csv,pgm}` and `step.csv` into `dir`.
pub fn export_maps(dir: &Path, prediction: &Prediction) -> Result<()> {
    let s = prediction.similarity.values();
    let t = prediction.mask.values();
    write_bytes(&dir.join("similarity.csv"), matrix_csv(s).as_bytes())?;
    write_bytes(&dir.join("similarity.pgm"), &pgm_bytes(s))?;
    write_bytes(&dir.join("mask.csv"), matrix_csv(t).as_bytes())?;
    write_bytes(&dir.join("mask.pgm"), &pgm_bytes(t))?;
    write_bytes(&dir.join("step.csv"), step_csv(&prediction.step).as_bytes())
}
