//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] is a tape: every op computes its value when it is added, and
//! [`Graph::backward`] walks the tape in reverse. Values are `features × batch`
//! matrices. Wherever two operands meet, an operand with a single column is
//! broadcast across the batch, which is how frozen compiled tensors and
//! biases enter a batched graph.
//!
//! Parameters live in a [`ParamStore`] outside the graph so a fresh graph can
//! be built for every training step.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Matrix, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    /// `α₁·then + α₂·else`, where `[α₁, α₂]` is the 2-row condition.
    SoftBranch {
        cond: NodeId,
        then_b: NodeId,
        else_b: NodeId,
    },
    /// `then` where `α₁ = 1` exactly, `else` elsewhere. No gradient reaches the condition.
    HardBranch {
        cond: NodeId,
        then_b: NodeId,
        else_b: NodeId,
    },
    /// Vertical stacking.
    Concat(Vec<NodeId>),
    /// `out[i + m·j] = a[i]·b[j]` per column, with `m` the rows of `a`.
    TensorProduct(NodeId, NodeId),
    /// Typed application of a vectorized `m × k` linear map to a `k`-vector:
    /// `out[i] = Σ_j f[i + m·j]·a[j]` per column.
    Apply {
        func: NodeId,
        arg: NodeId,
        rows: usize,
    },
    /// Mean softmax cross-entropy of the logit columns against class labels.
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub value: Matrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// A `rows × cols` weight drawn from `N(0, 2/cols)`.
    pub fn add_he(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> ParamId {
        self.add(name, he_matrix(rows, cols, rng))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }
}

pub fn he_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let normal = Normal::new(0.0, (2.0 / cols.max(1) as f64).sqrt()).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_row_major(rows, cols, data).expect("sized")
}

/// Gradients of a scalar loss with respect to each parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(Vec<Matrix>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> TensorError {
    TensorError::Incompatible(format!("{what}: {}x{} and {}x{}", a.0, a.1, b.0, b.1))
}

// Batch size of operands that may broadcast a single column.
fn batch_of(shapes: &[(usize, usize)]) -> Option<usize> {
    let n = shapes.iter().map(|s| s.1).max()?;
    shapes.iter().all(|s| s.1 == n || s.1 == 1).then_some(n)
}

fn at(m: &Matrix, i: usize, j: usize) -> f64 {
    if m.cols() == 1 {
        m.get(i, 0)
    } else {
        m.get(i, j)
    }
}

// Adds `g` (rows × n) into `acc`, summing over the batch if `acc` is a broadcast column.
fn accumulate(acc: &mut Matrix, i: usize, j: usize, g: f64) {
    let j = if acc.cols() == 1 { 0 } else { j };
    let v = acc.get(i, j);
    acc.set(i, j, v + g);
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant: data, or a frozen tensor that receives no updates.
    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.get(id).clone())
    }

    pub fn matmul(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(w).matmul(self.value(x))?;
        Ok(self.push(Op::MatMul(w, x), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        let n = batch_of(&[va.shape(), vb.shape()]).filter(|_| va.rows() == vb.rows());
        let n = n.ok_or_else(|| shape_err("add", va.shape(), vb.shape()))?;
        let mut out = Matrix::zeros(va.rows(), n);
        for i in 0..va.rows() {
            for j in 0..n {
                out.set(i, j, at(va, i, j) + at(vb, i, j));
            }
        }
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).scale(k);
        self.push(Op::Scale(a, k), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    /// `relu(w·x + b)` or, without `relu`, an affine layer.
    pub fn dense(
        &mut self,
        store: &ParamStore,
        w: ParamId,
        b: ParamId,
        x: NodeId,
        relu: bool,
    ) -> Result<NodeId, TensorError> {
        let w = self.param(store, w);
        let b = self.param(store, b);
        let wx = self.matmul(w, x)?;
        let out = self.add(wx, b)?;
        Ok(if relu { self.relu(out) } else { out })
    }

    fn branch_shapes(&self, cond: NodeId, then_b: NodeId, else_b: NodeId) -> Result<(usize, usize), TensorError> {
        let (c, t, e) = (self.value(cond), self.value(then_b), self.value(else_b));
        if c.rows() != 2 {
            return Err(TensorError::Incompatible(format!("condition has {} rows, expected 2", c.rows())));
        }
        if t.rows() != e.rows() {
            return Err(shape_err("branches", t.shape(), e.shape()));
        }
        let n = batch_of(&[c.shape(), t.shape(), e.shape()])
            .ok_or_else(|| shape_err("branch batch", c.shape(), t.shape()))?;
        Ok((t.rows(), n))
    }

    pub fn soft_branch(&mut self, cond: NodeId, then_b: NodeId, else_b: NodeId) -> Result<NodeId, TensorError> {
        let (d, n) = self.branch_shapes(cond, then_b, else_b)?;
        let (c, t, e) = (self.value(cond), self.value(then_b), self.value(else_b));
        let mut out = Matrix::zeros(d, n);
        for j in 0..n {
            let (a1, a2) = (at(c, 0, j), at(c, 1, j));
            for i in 0..d {
                out.set(i, j, a1 * at(t, i, j) + a2 * at(e, i, j));
            }
        }
        Ok(self.push(Op::SoftBranch { cond, then_b, else_b }, out))
    }

    pub fn hard_branch(&mut self, cond: NodeId, then_b: NodeId, else_b: NodeId) -> Result<NodeId, TensorError> {
        let (d, n) = self.branch_shapes(cond, then_b, else_b)?;
        let (c, t, e) = (self.value(cond), self.value(then_b), self.value(else_b));
        let mut out = Matrix::zeros(d, n);
        for j in 0..n {
            let src = if at(c, 0, j) == 1.0 { t } else { e };
            for i in 0..d {
                out.set(i, j, at(src, i, j));
            }
        }
        Ok(self.push(Op::HardBranch { cond, then_b, else_b }, out))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let shapes: Vec<_> = parts.iter().map(|&p| self.value(p).shape()).collect();
        let n = batch_of(&shapes).ok_or_else(|| TensorError::Incompatible(format!("concat: {shapes:?}")))?;
        let rows = shapes.iter().map(|s| s.0).sum();
        let mut out = Matrix::zeros(rows, n);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for i in 0..v.rows() {
                for j in 0..n {
                    out.set(offset + i, j, at(v, i, j));
                }
            }
            offset += v.rows();
        }
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    pub fn tensor_product(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        let n =
            batch_of(&[va.shape(), vb.shape()]).ok_or_else(|| shape_err("tensor product", va.shape(), vb.shape()))?;
        let m = va.rows();
        let mut out = Matrix::zeros(m * vb.rows(), n);
        for j in 0..n {
            for q in 0..vb.rows() {
                for i in 0..m {
                    out.set(i + m * q, j, at(va, i, j) * at(vb, q, j));
                }
            }
        }
        Ok(self.push(Op::TensorProduct(a, b), out))
    }

    pub fn apply(&mut self, func: NodeId, arg: NodeId, rows: usize) -> Result<NodeId, TensorError> {
        let (f, a) = (self.value(func), self.value(arg));
        if rows == 0 || f.rows() != rows * a.rows() {
            return Err(shape_err("apply", f.shape(), a.shape()));
        }
        let n = batch_of(&[f.shape(), a.shape()]).ok_or_else(|| shape_err("apply batch", f.shape(), a.shape()))?;
        let mut out = Matrix::zeros(rows, n);
        for c in 0..n {
            for j in 0..a.rows() {
                let aj = at(a, j, c);
                for i in 0..rows {
                    let v = out.get(i, c) + at(f, i + rows * j, c) * aj;
                    out.set(i, c, v);
                }
            }
        }
        Ok(self.push(Op::Apply { func, arg, rows }, out))
    }

    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId, TensorError> {
        let z = self.value(logits);
        if z.cols() != labels.len() || labels.iter().any(|&l| l >= z.rows()) {
            return Err(TensorError::Incompatible(format!(
                "cross entropy: {}x{} logits, {} labels",
                z.rows(),
                z.cols(),
                labels.len()
            )));
        }
        let mut total = 0.0;
        for (j, &l) in labels.iter().enumerate() {
            total += log_sum_exp(z, j) - z.get(l, j);
        }
        let loss = Matrix::column(&[total / labels.len().max(1) as f64]);
        Ok(self.push(Op::CrossEntropy { logits, labels: labels.to_vec() }, loss))
    }

    /// Gradients of the `1 × 1` node `loss` with respect to every parameter of `store`.
    pub fn backward(&self, loss: NodeId, store: &ParamStore) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::column(&[1.0]));
        let mut out: Vec<Matrix> =
            store.ids().map(|p| Matrix::zeros(store.get(p).rows(), store.get(p).cols())).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let send = |target: NodeId, contrib: Matrix, grads: &mut Vec<Option<Matrix>>| {
                let slot = &mut grads[target.0];
                match slot {
                    Some(acc) => *acc = acc.add(&contrib).expect("gradient shapes agree"),
                    None => *slot = Some(contrib),
                }
            };
            let zeros_like = |id: NodeId| {
                let v = self.value(id);
                Matrix::zeros(v.rows(), v.cols())
            };
            match &node.op {
                Op::Input => {}
                Op::Param(p) => out[p.0] = out[p.0].add(&g).expect("param gradient shape"),
                Op::MatMul(w, x) => {
                    let (vw, vx) = (self.value(*w), self.value(*x));
                    send(*w, g.matmul(&vx.transpose()).expect("shapes"), &mut grads);
                    send(*x, vw.transpose().matmul(&g).expect("shapes"), &mut grads);
                }
                Op::Add(a, b) => {
                    for &t in [a, b] {
                        let mut acc = zeros_like(t);
                        for i in 0..g.rows() {
                            for j in 0..g.cols() {
                                accumulate(&mut acc, i, j, g.get(i, j));
                            }
                        }
                        send(t, acc, &mut grads);
                    }
                }
                Op::Scale(a, k) => send(*a, g.scale(*k), &mut grads),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let d = g.zip_with(x, |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    send(*a, d, &mut grads);
                }
                Op::SoftBranch { cond, then_b, else_b } => {
                    let (c, t, e) = (self.value(*cond), self.value(*then_b), self.value(*else_b));
                    let (mut gc, mut gt, mut ge) = (zeros_like(*cond), zeros_like(*then_b), zeros_like(*else_b));
                    for j in 0..g.cols() {
                        let (a1, a2) = (at(c, 0, j), at(c, 1, j));
                        let (mut d1, mut d2) = (0.0, 0.0);
                        for i in 0..g.rows() {
                            let gij = g.get(i, j);
                            d1 += gij * at(t, i, j);
                            d2 += gij * at(e, i, j);
                            accumulate(&mut gt, i, j, a1 * gij);
                            accumulate(&mut ge, i, j, a2 * gij);
                        }
                        accumulate(&mut gc, 0, j, d1);
                        accumulate(&mut gc, 1, j, d2);
                    }
                    send(*cond, gc, &mut grads);
                    send(*then_b, gt, &mut grads);
                    send(*else_b, ge, &mut grads);
                }
                Op::HardBranch { cond, then_b, else_b } => {
                    let c = self.value(*cond);
                    let (mut gt, mut ge) = (zeros_like(*then_b), zeros_like(*else_b));
                    for j in 0..g.cols() {
                        let take_then = at(c, 0, j) == 1.0;
                        for i in 0..g.rows() {
                            let target = if take_then { &mut gt } else { &mut ge };
                            accumulate(target, i, j, g.get(i, j));
                        }
                    }
                    send(*cond, zeros_like(*cond), &mut grads);
                    send(*then_b, gt, &mut grads);
                    send(*else_b, ge, &mut grads);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let mut acc = zeros_like(p);
                        for i in 0..acc.rows() {
                            for j in 0..g.cols() {
                                accumulate(&mut acc, i, j, g.get(offset + i, j));
                            }
                        }
                        offset += acc.rows();
                        send(p, acc, &mut grads);
                    }
                }
                Op::TensorProduct(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let m = va.rows();
                    let (mut ga, mut gb) = (zeros_like(*a), zeros_like(*b));
                    for j in 0..g.cols() {
                        for q in 0..vb.rows() {
                            for i in 0..m {
                                let gij = g.get(i + m * q, j);
                                accumulate(&mut ga, i, j, gij * at(vb, q, j));
                                accumulate(&mut gb, q, j, gij * at(va, i, j));
                            }
                        }
                    }
                    send(*a, ga, &mut grads);
                    send(*b, gb, &mut grads);
                }
                Op::Apply { func, arg, rows } => {
                    let (f, a) = (self.value(*func), self.value(*arg));
                    let (mut gf, mut ga) = (zeros_like(*func), zeros_like(*arg));
                    for c in 0..g.cols() {
                        for j in 0..a.rows() {
                            for i in 0..*rows {
                                let gi = g.get(i, c);
                                accumulate(&mut gf, i + rows * j, c, gi * at(a, j, c));
                                accumulate(&mut ga, j, c, gi * at(f, i + rows * j, c));
                            }
                        }
                    }
                    send(*func, gf, &mut grads);
                    send(*arg, ga, &mut grads);
                }
                Op::CrossEntropy { logits, labels } => {
                    let z = self.value(*logits);
                    let scale = g.get(0, 0) / labels.len().max(1) as f64;
                    let mut gz = zeros_like(*logits);
                    for (j, &l) in labels.iter().enumerate() {
                        let lse = log_sum_exp(z, j);
                        for i in 0..z.rows() {
                            let p = (z.get(i, j) - lse).exp();
                            let y = if i == l { 1.0 } else { 0.0 };
                            gz.set(i, j, scale * (p - y));
                        }
                    }
                    send(*logits, gz, &mut grads);
                }
            }
        }
        Gradients(out)
    }
}

fn log_sum_exp(z: &Matrix, j: usize) -> f64 {
    let max = (0..z.rows()).map(|i| z.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
    max + (0..z.rows()).map(|i| (z.get(i, j) - max).exp()).sum::<f64>().ln()
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Matrix> = store.ids().map(|p| Matrix::zeros(store.get(p).rows(), store.get(p).cols())).collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for p in store.ids() {
            let g = grads.get(p).data();
            let (m, v) = (self.m[p.0].data_mut(), self.v[p.0].data_mut());
            let w = store.get_mut(p).data_mut();
            for k in 0..w.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                w[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Central-difference gradient of `loss` with respect to every parameter entry.
pub fn finite_difference(store: &ParamStore, step: f64, loss: impl Fn(&ParamStore) -> f64) -> Gradients {
    let mut probe = store.clone();
    let mut out = Vec::new();
    for p in store.ids() {
        let mut g = Matrix::zeros(store.get(p).rows(), store.get(p).cols());
        for k in 0..g.data().len() {
            let orig = store.get(p).data()[k];
            probe.get_mut(p).data_mut()[k] = orig + step;
            let up = loss(&probe);
            probe.get_mut(p).data_mut()[k] = orig - step;
            let down = loss(&probe);
            probe.get_mut(p).data_mut()[k] = orig;
            g.data_mut()[k] = (up - down) / (2.0 * step);
        }
        out.push(g);
    }
    Gradients(out)
}

/// Largest relative disagreement `|a − b| / max(1, |a|, |b|)` between two gradient sets.
pub fn max_relative_error(a: &Gradients, b: &Gradients) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()))
        .map(|(x, y)| (x - y).abs() / 1f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchMode {
    Soft,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradProbe {
    /// Largest autodiff gradient magnitude over the condition parameters.
    pub autodiff: f64,
    /// Largest central-difference gradient magnitude over the condition parameters.
    pub finite_difference: f64,
    /// Relative disagreement between the two.
    pub relative_error: f64,
}

/// Step used by [`grad_probe_branch`] and the gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Differentiates a cross-entropy loss through one conditional whose
/// condition is the trainable parameter `cond` and whose branches are fixed,
/// distinct logit vectors.
pub fn grad_probe_branch(cond: [f64; 2], mode: BranchMode) -> GradProbe {
    let mut store = ParamStore::new();
    let c = store.add("cond", Matrix::column(&cond));
    let loss = |store: &ParamStore| -> (Graph, NodeId) {
        let mut g = Graph::new();
        let cn = g.param(store, c);
        let t = g.input(Matrix::column(&[2.0, -1.0]));
        let e = g.input(Matrix::column(&[-1.0, 3.0]));
        let out = match mode {
            BranchMode::Soft => g.soft_branch(cn, t, e),
            BranchMode::Hard => g.hard_branch(cn, t, e),
        }
        .expect("shapes fixed");
        let l = g.cross_entropy(out, &[0]).expect("shapes fixed");
        (g, l)
    };
    let (g, l) = loss(&store);
    let ad = g.backward(l, &store);
    let fd = finite_difference(&store, FD_STEP, |s| {
        let (g, l) = loss(s);
        g.value(l).get(0, 0)
    });
    GradProbe { autodiff: ad.max_abs(), finite_difference: fd.max_abs(), relative_error: max_relative_error(&ad, &fd) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_examples() {
        let mut g = Graph::new();
        let w = g.input(Matrix::from_rows(&[vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]]));
        let x = g.input(Matrix::column(&[1.0, 2.0, 3.0]));
        let y = g.matmul(w, x).unwrap();
        assert_eq!(g.value(y).data(), &[10.0, 3.0]);

        let r = g.input(Matrix::column(&[-1.0, 2.0]));
        let r = g.relu(r);
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);

        let c = g.input(Matrix::column(&[0.3, 0.7]));
        let b1 = g.input(Matrix::column(&[1.0, 2.0]));
        let b2 = g.input(Matrix::column(&[-4.0, 10.0]));
        let s = g.soft_branch(c, b1, b2).unwrap();
        let want = [0.3 * 1.0 + 0.7 * -4.0, 0.3 * 2.0 + 0.7 * 10.0];
        assert!(g.value(s).data().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn scalar_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::column(&[3.0]));
        let mut g = Graph::new();
        let wn = g.param(&store, w);
        let x = g.input(Matrix::column(&[2.0]));
        let loss = g.matmul(wn, x).unwrap();
        assert_eq!(g.backward(loss, &store).get(w).data(), &[2.0]);

        let mut store = ParamStore::new();
        let p = store.add("p", Matrix::column(&[-1.0]));
        let mut g = Graph::new();
        let pn = g.param(&store, p);
        let r = g.relu(pn);
        assert_eq!(g.backward(r, &store).get(p).data(), &[0.0]);
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.input(Matrix::zeros(2, 3));
        let b = g.input(Matrix::zeros(3, 2));
        assert!(g.add(a, b).is_err());
        let c = g.input(Matrix::zeros(3, 1));
        assert!(g.soft_branch(c, a, a).is_err());
        assert!(g.apply(a, b, 5).is_err());
        assert!(g.cross_entropy(a, &[0]).is_err());
    }

    #[test]
    fn soft_branch_is_linear_in_each_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r =
            |rng: &mut ChaCha8Rng, n| Matrix::column(&(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let (c, t, e, t2) = (r(&mut rng, 2), r(&mut rng, 3), r(&mut rng, 3), r(&mut rng, 3));
        let eval = |c: &Matrix, t: &Matrix, e: &Matrix| {
            let mut g = Graph::new();
            let (c, t, e) = (g.input(c.clone()), g.input(t.clone()), g.input(e.clone()));
            let s = g.soft_branch(c, t, e).unwrap();
            g.value(s).clone()
        };
        let k = 2.5;
        let lhs = eval(&c, &t.scale(k).add(&t2).unwrap(), &e.scale(k));
        let rhs = eval(&c, &t, &e).scale(k).add(&eval(&c, &t2, &Matrix::zeros(3, 1))).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let lhs = eval(&c.scale(k), &t, &e);
        assert!(lhs.max_abs_diff(&eval(&c, &t, &e).scale(k)) < 1e-12);
    }

    #[test]
    fn hard_branch_routes_gradient_to_taken_branch() {
        let mut store = ParamStore::new();
        let c = store.add("c", Matrix::column(&[1.0, 0.0]));
        let t = store.add("t", Matrix::column(&[0.5, 0.1]));
        let e = store.add("e", Matrix::column(&[0.2, 0.9]));
        let mut g = Graph::new();
        let (cn, tn, en) = (g.param(&store, c), g.param(&store, t), g.param(&store, e));
        let out = g.hard_branch(cn, tn, en).unwrap();
        let loss = g.cross_entropy(out, &[1]).unwrap();
        let grads = g.backward(loss, &store);
        assert_eq!(grads.get(c).max_abs(), 0.0);
        assert!(grads.get(t).max_abs() > 0.1);
        assert_eq!(grads.get(e).max_abs(), 0.0);
    }

    #[test]
    fn adam_examples() {
        let mut store = ParamStore::new();
        let p = store.add("p", Matrix::column(&[1.0, -2.0]));
        let zero = Gradients(vec![Matrix::zeros(2, 1)]);
        let mut adam = AdamState::new(&store, 0.1);
        adam.step(&mut store, &zero);
        assert_eq!(store.get(p).data(), &[1.0, -2.0]);

        // First bias-corrected step moves each entry by lr·g/(|g| + ε).
        let mut adam = AdamState::new(&store, 0.01);
        let g = Gradients(vec![Matrix::column(&[3.0, -0.5])]);
        adam.step(&mut store, &g);
        let moved = [1.0 - store.get(p).data()[0], -2.0 - store.get(p).data()[1]];
        assert!((moved[0] - 0.01).abs() < 1e-9 && (moved[1] + 0.01).abs() < 1e-9, "{moved:?}");

        for _ in 0..50 {
            adam.step(&mut store, &g);
        }
        assert!(store.get(p).data()[0] < 0.9 && store.get(p).data()[1] > -1.9);
    }

    #[test]
    fn branch_probe() {
        let hard = grad_probe_branch([0.3, 0.7], BranchMode::Hard);
        assert_eq!(hard.autodiff, 0.0);
        assert!(hard.finite_difference < 1e-8);
        let soft = grad_probe_branch([0.3, 0.7], BranchMode::Soft);
        assert!(soft.autodiff > 1e-3);
        assert!(soft.relative_error < 1e-4);
    }
}
