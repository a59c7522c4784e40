//! Triplet training loop shared by pretraining and fine-tuning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, PlateauSchedule};
use super::{real, triplet_loss_grad, Network, Real};
use crate::error::{Error, Result};
use crate::render::{augment, TrajectoryImage};

/// Triplets per gradient chunk. Chunks are summed in index order, so the
/// batch gradient does not depend on the thread count.
pub const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub triplets_per_epoch: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_threshold: f64,
    pub stop_loss: f64,
    pub stop_window: usize,
    pub margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.08,
            weight_decay: 1e-6,
            batch_size: 4096,
            triplets_per_epoch: 16_384,
            max_epochs: 500,
            plateau_patience: 15,
            plateau_factor: 0.5,
            plateau_threshold: 1e-4,
            stop_loss: 1e-3,
            stop_window: 10,
            margin: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("margin", self.margin),
            ("stop_loss", self.stop_loss),
            ("plateau_factor", self.plateau_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 || self.plateau_threshold < 0.0 {
            return Err(Error::contract("weight_decay and plateau_threshold must be non-negative"));
        }
        if self.batch_size == 0 || self.triplets_per_epoch == 0 || self.max_epochs == 0 || self.stop_window == 0 {
            return Err(Error::contract("batch, epoch and window sizes must be positive"));
        }
        Ok(())
    }
}

/// Network inputs of one triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet<T = f32> {
    pub anchor: Vec<T>,
    pub positive: Vec<T>,
    pub negative: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    LossConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub stop: StopReason,
}

/// Summed loss and summed parameter gradient over `triplets`.
fn chunk_gradient<T: Real>(net: &Network<T>, triplets: &[Triplet<T>], margin: T) -> Result<(f64, Vec<T>)> {
    let mut grad = vec![T::zero(); net.params().len()];
    let mut loss = 0.0;
    for t in triplets {
        let acts = [
            net.forward_trace(&t.anchor)?,
            net.forward_trace(&t.positive)?,
            net.forward_trace(&t.negative)?,
        ];
        let (value, grads) = triplet_loss_grad(acts[0].output(), acts[1].output(), acts[2].output(), margin);
        if value <= T::zero() {
            continue;
        }
        loss += value.to_f64().unwrap_or(f64::NAN);
        for (a, g) in acts.iter().zip(&grads) {
            net.backward(a, g, &mut grad);
        }
    }
    Ok((loss, grad))
}

/// Mean loss and gradient of the mean loss over a nonempty batch.
pub fn batch_gradient<T: Real>(net: &Network<T>, batch: &[Triplet<T>], margin: f64) -> Result<(f64, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::contract("empty triplet batch"));
    }
    let m = real::<T>(margin);
    let parts: Vec<Result<(f64, Vec<T>)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|c| chunk_gradient(net, c, m))
        .collect();
    let mut grad = vec![T::zero(); net.params().len()];
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let scale = real::<T>(1.0 / batch.len() as f64);
    for g in &mut grad {
        *g = *g * scale;
    }
    Ok((loss / batch.len() as f64, grad))
}

/// Runs the optimization loop. Each epoch draws `triplets_per_epoch`
/// triplets, batch by batch, from `next_batch(count, rng)`.
pub fn train<T, F>(net: &mut Network<T>, cfg: &TrainConfig, seed: u64, mut next_batch: F) -> Result<TrainReport>
where
    T: Real,
    F: FnMut(usize, &mut ChaCha8Rng) -> Result<Vec<Triplet<T>>>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::<T>::new(net.params().len(), cfg.learning_rate, cfg.weight_decay);
    let mut sched = PlateauSchedule::new(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold);
    let mut log: Vec<EpochLog> = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut total = 0.0;
        let mut remaining = cfg.triplets_per_epoch;
        while remaining > 0 {
            let count = remaining.min(cfg.batch_size);
            let batch = next_batch(count, &mut rng)?;
            if batch.len() != count {
                return Err(Error::contract(format!(
                    "triplet source returned {} triplets, {count} requested",
                    batch.len()
                )));
            }
            let (loss, grad) = batch_gradient(net, &batch, cfg.margin)?;
            total += loss * count as f64;
            adam.step(net.params_mut(), &grad);
            remaining -= count;
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::contract(format!("training diverged in epoch {epoch}")));
        }
        let loss = total / cfg.triplets_per_epoch as f64;
        log.push(EpochLog {
            epoch,
            loss,
            learning_rate: adam.lr,
        });
        log::info!("epoch {epoch}: loss {loss:.6} lr {:.5}", adam.lr);
        adam.lr = sched.observe(loss, adam.lr);
        if log.len() >= cfg.stop_window {
            let recent = &log[log.len() - cfg.stop_window..];
            let mean = recent.iter().map(|e| e.loss).sum::<f64>() / cfg.stop_window as f64;
            if mean < cfg.stop_loss {
                return Ok(TrainReport {
                    log,
                    stop: StopReason::LossConverged,
                });
            }
        }
    }
    Ok(TrainReport {
        log,
        stop: StopReason::MaxEpochs,
    })
}

/// Self-supervised pretraining: anchor and negative are two distinct
/// dataset images drawn with replacement, the positive is an augmentation
/// of the anchor.
pub fn pretrain(
    net: &mut Network<f32>,
    dataset: &[TrajectoryImage],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if dataset.len() < 2 {
        return Err(Error::contract(format!(
            "pretraining needs at least 2 images, dataset has {}",
            dataset.len()
        )));
    }
    let n = dataset.len();
    train(net, cfg, seed, |count, rng| {
        Ok((0..count)
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                let pos = augment(&dataset[a], rng);
                Triplet {
                    anchor: dataset[a].pixels().to_vec(),
                    positive: pos.pixels().to_vec(),
                    negative: dataset[b].pixels().to_vec(),
                }
            })
            .collect())
    })
}
