use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamSet};
use super::tape::{NodeId, Tape};

/// Half-width of the uniform initializer shared by every network.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        let table = ps.add_uniform(name, &[vocab, dim], INIT_SCALE, rng);
        Embedding { table, dim }
    }

    pub fn lookup(&self, tape: &mut Tape, token: usize) -> NodeId {
        tape.embed(self.table, token)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = ps.add_uniform(&format!("{name}.w"), &[output, input], INIT_SCALE, rng);
        let b = ps.add_uniform(&format!("{name}.b"), &[output], INIT_SCALE, rng);
        Dense { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        tape.affine(self.w, Some(self.b), x)
    }
}

/// Recurrent state `(h, c)` of an LSTM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Single-layer LSTM. Gate pre-activations are one affine map of `[x; h]`
/// laid out as input, forget, cell, output blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w = ps.add_uniform(&format!("{name}.w"), &[4 * hidden, input + hidden], INIT_SCALE, rng);
        let b = ps.add_uniform(&format!("{name}.b"), &[4 * hidden], INIT_SCALE, rng);
        Lstm { w, b, input, hidden }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> LstmState {
        LstmState {
            h: tape.zeros(self.hidden),
            c: tape.zeros(self.hidden),
        }
    }

    pub fn step(&self, tape: &mut Tape, x: NodeId, state: LstmState) -> LstmState {
        let hd = self.hidden;
        let xh = tape.concat(&[x, state.h]);
        let z = tape.affine(self.w, Some(self.b), xh);
        let zi = tape.slice(z, 0, hd);
        let zf = tape.slice(z, hd, hd);
        let zg = tape.slice(z, 2 * hd, hd);
        let zo = tape.slice(z, 3 * hd, hd);
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let fc = tape.mul(f, state.c);
        let ig = tape.mul(i, g);
        let c = tape.add(fc, ig);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc);
        LstmState { h, c }
    }

    /// Runs over `inputs` from `init`, returning every hidden output and the final state.
    pub fn run(&self, tape: &mut Tape, inputs: &[NodeId], init: LstmState) -> (Vec<NodeId>, LstmState) {
        let mut state = init;
        let mut outs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = self.step(tape, x, state);
            outs.push(state.h);
        }
        (outs, state)
    }
}
