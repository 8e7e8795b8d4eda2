use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// Starting value of every squared-gradient accumulator.
pub const INITIAL_ACCUMULATOR: f64 = 0.1;

/// Adagrad: per-coordinate step `lr · g / sqrt(acc)` with `acc += g²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub accumulators: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        Adagrad {
            learning_rate,
            accumulators: params
                .iter()
                .map(|(_, t)| vec![INITIAL_ACCUMULATOR; t.len()])
                .collect(),
        }
    }

    /// Descends along `grads`. Rejects non-finite gradients without touching parameters.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        if self.learning_rate == 0.0 {
            return Ok(());
        }
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id);
            let acc = &mut self.accumulators[id.index()];
            let data = &mut params.get_mut(id).data;
            for ((p, a), gi) in data.iter_mut().zip(acc.iter_mut()).zip(g) {
                if *gi == 0.0 {
                    continue;
                }
                *a += gi * gi;
                *p -= self.learning_rate * gi / a.sqrt();
            }
        }
        Ok(())
    }

    /// Current step multiplier `lr / sqrt(acc)` for one coordinate.
    pub fn effective_rate(&self, tensor: usize, coord: usize) -> f64 {
        self.learning_rate / self.accumulators[tensor][coord].sqrt()
    }
}
