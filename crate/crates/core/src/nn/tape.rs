//! Reverse-mode differentiation over small dense vectors.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! output vector. Parameters are never copied onto the tape: operations that
//! read a parameter (`embed`, `affine`, `bilinear`) reference it through a
//! [`ParamId`] and accumulate straight into a [`Gradients`] buffer on the way
//! back. Scalars are vectors of length one.

use super::params::{Gradients, ParamId, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Embed { table: ParamId, row: usize },
    Affine { w: ParamId, b: Option<ParamId>, x: NodeId },
    Bilinear { a: ParamId, u: NodeId, v: NodeId },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Stack(Vec<NodeId>),
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    Softmax(NodeId),
    LogSoftmaxAt { x: NodeId, index: usize },
    MaxPool(Vec<NodeId>),
    Sum(Vec<NodeId>),
    Scale { x: NodeId, c: f64 },
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            values: Vec::with_capacity(256),
            ops: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn value(&self, n: NodeId) -> &[f64] {
        &self.values[n.0]
    }

    pub fn scalar(&self, n: NodeId) -> f64 {
        debug_assert_eq!(self.values[n.0].len(), 1);
        self.values[n.0][0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        NodeId(self.values.len() - 1)
    }

    /// A constant input; receives no gradient outside the tape.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.leaf(vec![0.0; n])
    }

    pub fn embed(&mut self, table: ParamId, row: usize) -> NodeId {
        let v = self.params.get(table).row(row).to_vec();
        self.push(v, Op::Embed { table, row })
    }

    /// `w · x + b` with `w` of shape `[out, in]`.
    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: NodeId) -> NodeId {
        let wt = self.params.get(w);
        let (rows, cols) = (wt.rows(), wt.cols());
        let xv = &self.values[x.0];
        assert_eq!(xv.len(), cols, "affine input width mismatch");
        let mut out = match b {
            Some(b) => self.params.get(b).data.clone(),
            None => vec![0.0; rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wt.data[r * cols..(r + 1) * cols];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(out, Op::Affine { w, b, x })
    }

    /// Scalar `uᵀ · a · v` with square `a`.
    pub fn bilinear(&mut self, a: ParamId, u: NodeId, v: NodeId) -> NodeId {
        let at = self.params.get(a);
        let n = at.cols();
        let (uv, vv) = (&self.values[u.0], &self.values[v.0]);
        let mut s = 0.0;
        for i in 0..n {
            let row = &at.data[i * n..(i + 1) * n];
            s += uv[i] * row.iter().zip(vv).map(|(x, y)| x * y).sum::<f64>();
        }
        self.push(vec![s], Op::Bilinear { a, u, v })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = zip_map(&self.values[a.0], &self.values[b.0], |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = zip_map(&self.values[a.0], &self.values[b.0], |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].iter().map(|&x| sigmoid(x)).collect();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].iter().map(|&x| x.max(0.0)).collect();
        self.push(v, Op::Relu(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&self.values[p.0]);
        }
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.values[x.0][start..start + len].to_vec();
        self.push(v, Op::Slice { x, start })
    }

    /// Gathers scalar nodes into one vector.
    pub fn stack(&mut self, scalars: &[NodeId]) -> NodeId {
        let v = scalars.iter().map(|s| self.values[s.0][0]).collect();
        self.push(v, Op::Stack(scalars.to_vec()))
    }

    /// `Σ weights[i] · items[i]`.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        let w = &self.values[weights.0];
        assert_eq!(w.len(), items.len());
        let dim = self.values[items[0].0].len();
        let mut out = vec![0.0; dim];
        for (wi, it) in w.iter().zip(items) {
            for (o, x) in out.iter_mut().zip(&self.values[it.0]) {
                *o += wi * x;
            }
        }
        self.push(out, Op::WeightedSum { weights, items: items.to_vec() })
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax(&self.values[a.0]);
        self.push(v, Op::Softmax(a))
    }

    /// `log softmax(x)[index]`, computed stably.
    pub fn log_softmax_at(&mut self, x: NodeId, index: usize) -> NodeId {
        let xv = &self.values[x.0];
        let v = xv[index] - log_sum_exp(xv);
        self.push(vec![v], Op::LogSoftmaxAt { x, index })
    }

    /// Elementwise max over equally sized vectors.
    pub fn max_pool(&mut self, items: &[NodeId]) -> NodeId {
        let mut out = self.values[items[0].0].clone();
        for it in &items[1..] {
            for (o, x) in out.iter_mut().zip(&self.values[it.0]) {
                if *x > *o {
                    *o = *x;
                }
            }
        }
        self.push(out, Op::MaxPool(items.to_vec()))
    }

    /// Elementwise sum over equally sized vectors.
    pub fn sum(&mut self, items: &[NodeId]) -> NodeId {
        let mut out = self.values[items[0].0].clone();
        for it in &items[1..] {
            for (o, x) in out.iter_mut().zip(&self.values[it.0]) {
                *o += x;
            }
        }
        self.push(out, Op::Sum(items.to_vec()))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.values[x.0].iter().map(|v| v * c).collect();
        self.push(v, Op::Scale { x, c })
    }

    /// Back-propagates `seed · ∂root/∂θ` into `grads`. `root` must be a scalar.
    pub fn backward(&self, root: NodeId, seed: f64, grads: &mut Gradients) {
        assert_eq!(self.values[root.0].len(), 1, "backward root must be scalar");
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); root.0 + 1];
        adj[root.0] = vec![seed];
        for n in (0..=root.0).rev() {
            if adj[n].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut adj[n]);
            self.propagate(n, &g, &mut adj, grads);
        }
    }

    fn propagate(&self, n: usize, g: &[f64], adj: &mut [Vec<f64>], grads: &mut Gradients) {
        let y = &self.values[n];
        match &self.ops[n] {
            Op::Leaf => {}
            Op::Embed { table, row } => {
                let cols = self.params.get(*table).cols();
                let buf = &mut grads.get_mut(*table)[row * cols..(row + 1) * cols];
                for (b, gi) in buf.iter_mut().zip(g) {
                    *b += gi;
                }
            }
            Op::Affine { w, b, x } => {
                let wt = self.params.get(*w);
                let cols = wt.cols();
                let xv = &self.values[x.0];
                {
                    let gw = grads.get_mut(*w);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        let row = &mut gw[r * cols..(r + 1) * cols];
                        for (d, xi) in row.iter_mut().zip(xv) {
                            *d += gr * xi;
                        }
                    }
                }
                if let Some(b) = b {
                    for (d, gi) in grads.get_mut(*b).iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                let dx = acc(adj, *x, cols);
                for (r, gr) in g.iter().enumerate() {
                    if *gr == 0.0 {
                        continue;
                    }
                    let row = &wt.data[r * cols..(r + 1) * cols];
                    for (d, wi) in dx.iter_mut().zip(row) {
                        *d += gr * wi;
                    }
                }
            }
            Op::Bilinear { a, u, v } => {
                let gs = g[0];
                let at = self.params.get(*a);
                let dim = at.cols();
                let (uv, vv) = (&self.values[u.0], &self.values[v.0]);
                {
                    let ga = grads.get_mut(*a);
                    for i in 0..dim {
                        for j in 0..dim {
                            ga[i * dim + j] += gs * uv[i] * vv[j];
                        }
                    }
                }
                let mut du = vec![0.0; dim];
                let mut dv = vec![0.0; dim];
                for i in 0..dim {
                    for j in 0..dim {
                        let aij = at.data[i * dim + j];
                        du[i] += gs * aij * vv[j];
                        dv[j] += gs * aij * uv[i];
                    }
                }
                add_into(acc(adj, *u, dim), &du);
                add_into(acc(adj, *v, dim), &dv);
            }
            Op::Add(a, b) => {
                add_into(acc(adj, *a, g.len()), g);
                add_into(acc(adj, *b, g.len()), g);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(&self.values[b.0]).map(|(g, v)| g * v).collect();
                let db: Vec<f64> = g.iter().zip(&self.values[a.0]).map(|(g, v)| g * v).collect();
                add_into(acc(adj, *a, g.len()), &da);
                add_into(acc(adj, *b, g.len()), &db);
            }
            Op::Sigmoid(a) => {
                let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                add_into(acc(adj, *a, g.len()), &d);
            }
            Op::Tanh(a) => {
                let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                add_into(acc(adj, *a, g.len()), &d);
            }
            Op::Relu(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(&self.values[a.0])
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(acc(adj, *a, g.len()), &d);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.values[p.0].len();
                    add_into(acc(adj, *p, len), &g[off..off + len]);
                    off += len;
                }
            }
            Op::Slice { x, start } => {
                let len = self.values[x.0].len();
                let d = acc(adj, *x, len);
                for (i, gi) in g.iter().enumerate() {
                    d[start + i] += gi;
                }
            }
            Op::Stack(scalars) => {
                for (s, gi) in scalars.iter().zip(g) {
                    acc(adj, *s, 1)[0] += gi;
                }
            }
            Op::WeightedSum { weights, items } => {
                let w = &self.values[weights.0];
                let mut dw = vec![0.0; w.len()];
                for (k, it) in items.iter().enumerate() {
                    let xv = &self.values[it.0];
                    dw[k] = g.iter().zip(xv).map(|(a, b)| a * b).sum();
                    let wk = w[k];
                    let d = acc(adj, *it, xv.len());
                    for (di, gi) in d.iter_mut().zip(g) {
                        *di += wk * gi;
                    }
                }
                add_into(acc(adj, *weights, w.len()), &dw);
            }
            Op::Softmax(a) => {
                let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| y * (g - dot)).collect();
                add_into(acc(adj, *a, g.len()), &d);
            }
            Op::LogSoftmaxAt { x, index } => {
                let gs = g[0];
                let p = softmax(&self.values[x.0]);
                let d = acc(adj, *x, p.len());
                for (i, (di, pi)) in d.iter_mut().zip(&p).enumerate() {
                    let one = if i == *index { 1.0 } else { 0.0 };
                    *di += gs * (one - pi);
                }
            }
            Op::MaxPool(items) => {
                for (j, gj) in g.iter().enumerate() {
                    let target = y[j];
                    let winner = items
                        .iter()
                        .find(|it| self.values[it.0][j] == target)
                        .expect("max-pool winner");
                    let len = self.values[winner.0].len();
                    acc(adj, *winner, len)[j] += gj;
                }
            }
            Op::Sum(items) => {
                for it in items {
                    add_into(acc(adj, *it, g.len()), g);
                }
            }
            Op::Scale { x, c } => {
                let d: Vec<f64> = g.iter().map(|g| g * c).collect();
                add_into(acc(adj, *x, g.len()), &d);
            }
        }
    }
}

fn acc(adj: &mut [Vec<f64>], n: NodeId, len: usize) -> &mut Vec<f64> {
    let slot = &mut adj[n.0];
    if slot.is_empty() {
        slot.resize(len, 0.0);
    }
    slot
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "elementwise length mismatch");
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
