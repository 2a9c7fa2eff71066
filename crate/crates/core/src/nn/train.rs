use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Mode;
use super::loss::softmax_cross_entropy;
use super::{Model, NnError, Real};
use crate::data::{batches, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5, batch_size: 128, learning_rate: 1e-3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

/// Minibatch Adam on softmax cross-entropy. Batch order comes from `rng`.
/// A non-finite loss aborts with [`NnError::NonFinite`].
pub fn train<T: Real, R: Rng + ?Sized>(
    model: &mut Model<T>,
    data: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport, NnError> {
    if config.batch_size == 0 {
        return Err(NnError::Shape("batch size must be positive".into()));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(NnError::Shape(format!("learning rate {}", config.learning_rate)));
    }
    let mut report = TrainReport::default();
    if data.is_empty() {
        return Ok(report);
    }
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for idx in batches(data.len(), config.batch_size, rng) {
            let (x, labels) = data.batch::<T>(&idx);
            let logits = model.forward(x, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(NnError::NonFinite(format!("training loss in epoch {epoch}")));
            }
            model.zero_grad();
            model.backward(grad)?;
            model.adam_step(config.learning_rate);
            report.steps += 1;
            total += loss * idx.len() as f64;
        }
        report.epoch_losses.push(total / data.len() as f64);
    }
    Ok(report)
}

/// Mean loss and accuracy in inference mode.
pub fn evaluate<T: Real>(
    model: &mut Model<T>,
    data: &Dataset,
    batch_size: usize,
) -> Result<EvalMetrics, NnError> {
    if data.is_empty() || batch_size == 0 {
        return Err(NnError::Shape("empty evaluation set or zero batch".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    let order: Vec<usize> = (0..data.len()).collect();
    for idx in order.chunks(batch_size) {
        let (x, labels) = data.batch::<T>(idx);
        let logits = model.forward(x, Mode::Eval)?;
        let (l, _) = softmax_cross_entropy(&logits, &labels)?;
        loss += l * idx.len() as f64;
        let classes = logits.shape()[1];
        for (row, &label) in logits.data().chunks(classes).zip(&labels) {
            let mut best = 0;
            for j in 1..classes {
                if row[j] > row[best] {
                    best = j;
                }
            }
            correct += usize::from(best == label);
        }
    }
    let n = data.len() as f64;
    Ok(EvalMetrics { loss: loss / n, accuracy: correct as f64 / n })
}
