//! The BPTT loop: per batch, reset state, unroll, backpropagate once per
//! window, and hand the optimizer's deltas to the weight backend.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::units::{BoundNet, Layer, Network, ParamId};

use super::backend::WeightBackend;
use super::config::TrainConfig;
use super::optim::{clip_global_norm, Optimizer};
use super::record::{EpochRow, RunRecord};

/// Derives an independent seed for `(tag, index)` from a base seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos(index as u128 * 2);
    rand::RngCore::next_u64(&mut rng)
}

pub const SEED_TAG_SHUFFLE: u64 = 1;
pub const SEED_TAG_ENCODE: u64 = 2;
pub const SEED_TAG_EVAL: u64 = 3;

/// Validation loss and task metric after an epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub valid_loss: f64,
    pub metric: f64,
}

pub trait Task {
    fn train_len(&self) -> usize;

    fn metric_name(&self) -> &'static str;

    /// Trains on the samples `batch`; returns the batch's mean loss.
    fn train_batch(&self, tr: &mut Trainer<'_>, batch: &[usize]) -> Result<f64>;

    fn evaluate(&self, net: &Network, exec: Exec) -> Result<Evaluation>;
}

pub struct Trainer<'a> {
    net: &'a mut Network,
    backend: &'a mut dyn WeightBackend,
    opt: Optimizer,
    grad_clip: Option<f64>,
    exec: Exec,
    pub epoch: usize,
    pub batch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(net: &'a mut Network, backend: &'a mut dyn WeightBackend, cfg: &TrainConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            net,
            backend,
            opt: Optimizer::new(cfg.optimizer.clone())?,
            grad_clip: cfg.grad_clip,
            exec,
            epoch: 0,
            batch: 0,
        })
    }

    pub fn net(&self) -> &Network {
        self.net
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn graph(&self) -> Graph {
        Graph::with_exec(self.exec)
    }

    /// Refreshes the network's weights from the backend; call before
    /// building each forward pass.
    pub fn begin_forward(&mut self) -> Result<()> {
        self.backend.prepare(self.net)
    }

    fn diverged(&self, loss: f64) -> Error {
        Error::Diverged {
            epoch: self.epoch,
            batch: self.batch,
            loss,
        }
    }

    /// Backpropagates `loss`, takes one optimizer step and applies it.
    /// Returns the loss value.
    pub fn update(&mut self, g: &mut Graph, bound: &BoundNet, loss: Var) -> Result<f64> {
        let value = g.value(loss).item().unwrap_or(f64::NAN);
        if !value.is_finite() {
            return Err(self.diverged(value));
        }
        match g.backward(loss) {
            Err(Error::NonFinite(_)) => return Err(self.diverged(value)),
            other => other?,
        }
        let mut grads: Vec<(ParamId, Vec<f64>)> = bound
            .params
            .iter()
            .map(|&(id, v)| (id, g.grad(v).map(|s| s.to_vec()).unwrap_or_default()))
            .collect();
        if let Some(max) = self.grad_clip {
            clip_global_norm(&mut grads, max);
        }
        self.opt.begin_step();
        for (id, grad) in &grads {
            if grad.is_empty() {
                continue;
            }
            let delta = self.opt.delta(*id, grad);
            self.backend.apply(self.net, *id, &delta)?;
        }
        clamp_decays(self.net);
        Ok(value)
    }
}

/// Keeps trainable decays inside `[0, 1]`.
pub fn clamp_decays(net: &mut Network) {
    for layer in &mut net.layers {
        let decay = match layer {
            Layer::Snu(l) if l.decay_trainable => &mut l.decay,
            Layer::Conv(l) if l.decay_trainable => &mut l.decay,
            _ => continue,
        };
        decay.data_mut().iter_mut().for_each(|d| *d = d.clamp(0.0, 1.0));
    }
}

/// Runs `cfg.epochs` epochs of `task`, evaluating after each.
pub fn bptt_train(
    net: &mut Network,
    task: &dyn Task,
    cfg: &TrainConfig,
    backend: &mut dyn WeightBackend,
    record: &mut RunRecord,
    exec: Exec,
) -> Result<()> {
    bptt_train_with(net, task, cfg, backend, record, exec, &mut |_| {})
}

/// [`bptt_train`] that calls `on_epoch` with every recorded row.
pub fn bptt_train_with(
    net: &mut Network,
    task: &dyn Task,
    cfg: &TrainConfig,
    backend: &mut dyn WeightBackend,
    record: &mut RunRecord,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<()> {
    let n = task.train_len();
    if n == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    let mut tr = Trainer::new(net, backend, cfg, exec)?;
    let start_epoch = record.last().map_or(0, |r| r.epoch);
    for e in 1..=cfg.epochs {
        let epoch = start_epoch + e;
        let t0 = Instant::now();
        tr.epoch = epoch;
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_TAG_SHUFFLE, epoch as u64));
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut weight = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            tr.batch = b;
            let loss = task.train_batch(&mut tr, chunk)?;
            total += loss * chunk.len() as f64;
            weight += chunk.len();
            tr.backend.end_batch(tr.net, b)?;
        }
        tr.backend.end_epoch(tr.net, epoch)?;
        tr.backend.prepare(tr.net)?;
        let eval = task.evaluate(tr.net, exec)?;
        let wall = if cfg.record_timing { t0.elapsed().as_secs_f64() } else { 0.0 };
        let row = EpochRow {
            epoch,
            train_loss: total / weight as f64,
            valid_loss: eval.valid_loss,
            metric: eval.metric,
            wall_seconds: wall,
        };
        on_epoch(&row);
        record.push(row)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, SEED_TAG_SHUFFLE, 0);
        assert_eq!(a, derive_seed(1, SEED_TAG_SHUFFLE, 0));
        assert_ne!(a, derive_seed(1, SEED_TAG_SHUFFLE, 1));
        assert_ne!(a, derive_seed(1, SEED_TAG_ENCODE, 0));
        assert_ne!(a, derive_seed(2, SEED_TAG_SHUFFLE, 0));
    }
}
