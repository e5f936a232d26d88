//! Mini-batch SGD over labeled pairs.

use copyalign_tensor::{Graph, Sgd};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::TrainingPair;
use crate::error::{Error, Result};
use crate::network::{pair_loss, Network};

/// How per-pair losses combine within a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Gradients of the batch sum.
    #[default]
    Sum,
    /// Gradients of the batch mean.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate from `decay_epoch` onward.
    pub decayed_learning_rate: f64,
    /// First epoch trained at the decayed rate; `None` means `epochs / 2`.
    pub decay_epoch: Option<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Weight of the step loss.
    pub lambda: f64,
    pub reduction: Reduction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 16,
            learning_rate: 5e-4,
            decayed_learning_rate: 5e-5,
            decay_epoch: None,
            momentum: 0.9,
            weight_decay: 1e-5,
            lambda: 1.0,
            reduction: Reduction::Sum,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("decayed_learning_rate", self.decayed_learning_rate),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lambda", self.lambda),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch.unwrap_or(self.epochs / 2) {
            self.decayed_learning_rate
        } else {
            self.learning_rate
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub mean_mask_loss: f64,
    pub mean_step_loss: f64,
    /// Supervised probabilities that hit the log floor during the epoch.
    pub clamped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub epochs: Vec<EpochStats>,
}

/// Trains in place. Each batch combines per-pair losses per `reduction`; `on_epoch` sees
/// the stats of every finished epoch.
pub fn train(
    net: &mut Network<f32>,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InsufficientInput("no training pairs".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate_at(epoch);
        let opt = Sgd { lr, momentum: cfg.momentum, weight_decay: cfg.weight_decay };
        let mut stats = EpochStats { epoch, learning_rate: lr, ..Default::default() };
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            net.params.zero_grad();
            let scale = match cfg.reduction {
                Reduction::Sum => 1.0,
                Reduction::Mean => 1.0 / batch.len() as f32,
            };
            let mut batch_loss = 0.0;
            for &k in batch {
                let p = &pairs[k];
                let mut g = Graph::new();
                let b = net.params.bind(&mut g);
                let u = g.constant(p.anchor.frames().clone());
                let v = g.constant(p.positive.frames().clone());
                let l = pair_loss(&mut g, &b, &net.config, u, v, &p.mask_label, &p.step_targets, cfg.lambda)?;
                let total = g.value(l.total).data()[0] as f64;
                if !total.is_finite() {
                    return Err(Error::Divergence { epoch, step, loss: total });
                }
                batch_loss += total;
                stats.mean_mask_loss += g.value(l.mask).data()[0] as f64;
                stats.mean_step_loss += g.value(l.step).data()[0] as f64;
                stats.clamped += l.clamped;
                let grads = g.backward(l.total)?;
                net.params.accumulate_grads(&b, &grads, scale)?;
            }
            stats.mean_loss += batch_loss;
            opt.step(&mut net.params)?;
            if net.params.iter().any(|p| !p.value.all_finite()) {
                return Err(Error::Divergence { epoch, step, loss: batch_loss / batch.len() as f64 });
            }
            report.steps += 1;
        }
        let n = pairs.len() as f64;
        stats.mean_loss /= n;
        stats.mean_mask_loss /= n;
        stats.mean_step_loss /= n;
        on_epoch(&stats);
        report.epochs.push(stats);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_drops_at_half() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(3), 5e-4);
        assert_eq!(cfg.learning_rate_at(4), 5e-5);
    }

    #[test]
    fn zero_batch_is_rejected() {
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
