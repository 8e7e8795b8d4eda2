use rand::seq::SliceRandom;
use rand::Rng;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::optim::Adagrad;
use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// Number of partial gradient buffers a batch is split into. Fixed, so the
/// floating-point reduction order does not depend on the worker count.
pub const SHARDS: usize = 4;

/// Relative epoch-loss increase tolerated before an epoch is flagged.
pub const EPOCH_INCREASE_TOLERANCE: f64 = 0.05;

/// Optional thread pool; `None` runs everything on the caller's thread.
pub struct Workers {
    pool: Option<ThreadPool>,
}

impl Workers {
    pub fn new(n: usize) -> Result<Self> {
        let pool = if n > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::validation(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Workers { pool })
    }

    pub fn serial() -> Self {
        Workers { pool: None }
    }

    /// Maps `f` over `items` in [`SHARDS`] contiguous shards, each with its own
    /// accumulator, then merges accumulators in shard order. Outputs keep input order.
    pub fn map_reduce<T, A, O, F, I, M>(&self, items: &[T], init: I, f: F, merge: M) -> Result<(A, Vec<O>)>
    where
        T: Sync,
        A: Send,
        O: Send,
        I: Fn() -> A + Sync,
        F: Fn(&T, &mut A) -> Result<O> + Sync,
        M: Fn(&mut A, A),
    {
        let shard = items.len().div_ceil(SHARDS).max(1);
        let run = |chunk: &[T]| -> Result<(A, Vec<O>)> {
            let mut acc = init();
            let mut outs = Vec::with_capacity(chunk.len());
            for it in chunk {
                outs.push(f(it, &mut acc)?);
            }
            Ok((acc, outs))
        };
        let parts: Vec<Result<(A, Vec<O>)>> = match &self.pool {
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| items.par_chunks(shard).map(run).collect())
            }
            None => items.chunks(shard).map(run).collect(),
        };
        let mut total: Option<A> = None;
        let mut outs = Vec::with_capacity(items.len());
        for p in parts {
            let (acc, o) = p?;
            outs.extend(o);
            match total.as_mut() {
                Some(t) => merge(t, acc),
                None => total = Some(acc),
            }
        }
        Ok((total.unwrap_or_else(init), outs))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Epochs whose loss rose more than the tolerance over the previous one.
    pub flagged_epochs: Vec<usize>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Mini-batch training: shuffle, average per-example gradients, clip, Adagrad step.
pub fn fit<T, R, F>(
    params: &mut ParamSet,
    optimizer: &mut Adagrad,
    data: &[T],
    opts: &FitOptions,
    workers: &Workers,
    rng: &mut R,
    loss_grad: F,
) -> Result<TrainReport>
where
    T: Sync,
    R: Rng,
    F: Fn(&ParamSet, &T, &mut Gradients) -> Result<f64> + Sync,
{
    let mut report = TrainReport::default();
    if opts.epochs == 0 || data.is_empty() {
        return Ok(report);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(opts.batch_size.max(1)).enumerate() {
            let items: Vec<&T> = batch.iter().map(|&i| &data[i]).collect();
            let snapshot: &ParamSet = params;
            let (mut grads, losses) = workers.map_reduce(
                &items,
                || Gradients::zeros_like(snapshot),
                |it, g| loss_grad(snapshot, it, g),
                |a, b| a.add_assign(&b),
            )?;
            let batch_loss: f64 = losses.iter().sum();
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::Training(format!(
                    "epoch {epoch} batch {b}: loss {batch_loss}, gradient finite: {}",
                    grads.all_finite()
                )));
            }
            total += batch_loss;
            grads.scale(1.0 / items.len() as f64);
            grads.clip_norm(opts.clip_norm);
            optimizer.step(params, &grads)?;
        }
        let mean = total / data.len() as f64;
        if let Some(&prev) = report.epoch_losses.last() {
            if mean > prev * (1.0 + EPOCH_INCREASE_TOLERANCE) {
                report.flagged_epochs.push(epoch);
            }
        }
        report.epoch_losses.push(mean);
    }
    Ok(report)
}
