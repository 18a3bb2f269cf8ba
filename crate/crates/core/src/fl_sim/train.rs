//! Gradient descent on mean squared error and size-weighted averaging.

use crate::scenario::BatchMode;

use super::synthetic::{dot, Samples};
use super::SimError;

/// Weights after local training plus how many sample-gradient evaluations it
/// took; the count drives simulated durations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub weights: Vec<f64>,
    pub samples_processed: u64,
}

pub fn mse(samples: &Samples, weights: &[f64]) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let sse: f64 = (0..n)
        .map(|i| {
            let r = dot(samples.row(i), weights) - samples.target(i);
            r * r
        })
        .sum();
    sse / n as f64
}

/// One step `w <- w - lr * (2/n) X^T (X w - y)` over rows `start..end`.
fn gradient_step(samples: &Samples, start: usize, end: usize, weights: &mut [f64], lr: f64) {
    let mut grad = vec![0.0; weights.len()];
    for i in start..end {
        let row = samples.row(i);
        let r = dot(row, weights) - samples.target(i);
        for (g, x) in grad.iter_mut().zip(row) {
            *g += x * r;
        }
    }
    let scale = 2.0 / (end - start) as f64;
    for (w, g) in weights.iter_mut().zip(&grad) {
        *w -= lr * scale * g;
    }
}

pub fn local_train(
    shard: &Samples,
    start_weights: &[f64],
    epochs: u32,
    learning_rate: f64,
    batch_mode: BatchMode,
) -> Result<LocalUpdate, SimError> {
    if shard.is_empty() {
        return Err(SimError::Dataset("cannot train on an empty shard".into()));
    }
    if start_weights.len() != shard.n_features() {
        return Err(SimError::Dataset(format!(
            "{} weights for {} features",
            start_weights.len(),
            shard.n_features()
        )));
    }
    let n = shard.len();
    let mut weights = start_weights.to_vec();
    for epoch in 0..epochs {
        match batch_mode {
            BatchMode::FullBatch => gradient_step(shard, 0, n, &mut weights, learning_rate),
            BatchMode::Minibatch { batch_size } => {
                let batch_size = batch_size.max(1);
                for start in (0..n).step_by(batch_size) {
                    gradient_step(
                        shard,
                        start,
                        (start + batch_size).min(n),
                        &mut weights,
                        learning_rate,
                    );
                }
            }
        }
        if !mse(shard, &weights).is_finite() {
            return Err(SimError::Divergence {
                learning_rate,
                epoch: epoch + 1,
            });
        }
    }
    Ok(LocalUpdate {
        weights,
        samples_processed: n as u64 * u64::from(epochs),
    })
}

/// FedAvg: sum over clients of `(n_k / sum n) * w_k`, elementwise.
pub fn fedavg_aggregate(
    weights_list: &[Vec<f64>],
    shard_sizes: &[usize],
) -> Result<Vec<f64>, SimError> {
    if weights_list.is_empty() {
        return Err(SimError::Aggregate("no client weights to aggregate".into()));
    }
    if weights_list.len() != shard_sizes.len() {
        return Err(SimError::Aggregate(format!(
            "{} weight vectors but {} shard sizes",
            weights_list.len(),
            shard_sizes.len()
        )));
    }
    if shard_sizes.contains(&0) {
        return Err(SimError::Aggregate("shard sizes must be > 0".into()));
    }
    let dim = weights_list[0].len();
    if weights_list.iter().any(|w| w.len() != dim) {
        return Err(SimError::Aggregate(
            "client weight vectors differ in length".into(),
        ));
    }
    let total: usize = shard_sizes.iter().sum();
    let mut global = vec![0.0; dim];
    for (w, &n) in weights_list.iter().zip(shard_sizes) {
        let coef = n as f64 / total as f64;
        for (g, x) in global.iter_mut().zip(w) {
            *g += coef * x;
        }
    }
    Ok(global)
}
