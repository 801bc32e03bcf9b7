//! Append-only computation graph with reverse-mode differentiation.
//!
//! Nodes are only ever appended and every node refers to parents created
//! before it, so creation order is a topological order and backward is a
//! single reverse sweep.

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeometry, Padding};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::Tensor;

/// Probabilities entering the Bernoulli likelihood are clipped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Handle of a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Heaviside step with strict inequality: `a > 0` spikes, `a == 0` does not.
pub fn heaviside(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Pseudo-derivative used in place of the step's derivative.
pub fn surrogate_grad(a: f64) -> f64 {
    let t = a.tanh();
    1.0 - t * t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxXent,
    BernoulliNll,
}

/// How the second operand of a binary op maps onto the first.
#[derive(Clone, Debug)]
enum Broadcast {
    Same,
    Scalar,
    /// `b` is a row vector repeated over every row of `a`.
    Row(usize),
    /// Right-aligned broadcasting with zero strides on expanded axes.
    General { a_shape: Vec<usize>, b_strides: Vec<usize> },
}

impl Broadcast {
    fn resolve(a: &[usize], b: &[usize]) -> Option<Broadcast> {
        if a == b {
            return Some(Broadcast::Same);
        }
        let b_numel: usize = b.iter().product();
        if b_numel == 1 {
            return Some(Broadcast::Scalar);
        }
        if b.len() > a.len() {
            return None;
        }
        let offset = a.len() - b.len();
        let mut strides = vec![0; a.len()];
        let mut stride = 1;
        for (i, &extent) in b.iter().enumerate().rev() {
            let target = a[offset + i];
            if extent == target {
                strides[offset + i] = stride;
            } else if extent != 1 {
                return None;
            }
            stride *= extent;
        }
        if b.len() == 1 && b[0] == *a.last().unwrap_or(&0) {
            return Some(Broadcast::Row(b[0]));
        }
        Some(Broadcast::General {
            a_shape: a.to_vec(),
            b_strides: strides,
        })
    }

    #[inline]
    fn index(&self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::Row(n) => i % n,
            Broadcast::General { a_shape, b_strides } => {
                let mut rem = i;
                let mut out = 0;
                for (extent, stride) in a_shape.iter().zip(b_strides).rev() {
                    out += (rem % extent) * stride;
                    rem /= extent;
                }
                out
            }
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, w: Var, rows: usize, inner: usize, cols: usize },
    Binary { kind: Elementwise, a: Var, b: Var, map: Broadcast },
    ScalarSub { a: Var },
    Scale { a: Var, k: f64 },
    Activation { kind: Activation, a: Var },
    Step { a: Var },
    Sum { a: Var },
    Reshape { a: Var },
    SoftmaxXent { logits: Var, probs: Vec<f64>, target: Vec<f64>, weights: Vec<f64> },
    BernoulliNll { probs: Var, target: Vec<f64>, weights: Vec<f64> },
    Conv2d { input: Var, kernel: Var, geom: ConvGeometry },
    MaxPool { input: Var, argmax: Vec<usize> },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul { a, w, .. } => vec![a, w],
            Op::Binary { a, b, .. } => vec![a, b],
            Op::ScalarSub { a }
            | Op::Scale { a, .. }
            | Op::Activation { a, .. }
            | Op::Step { a }
            | Op::Sum { a }
            | Op::Reshape { a } => vec![a],
            Op::SoftmaxXent { logits, .. } => vec![logits],
            Op::BernoulliNll { probs, .. } => vec![probs],
            Op::Conv2d { input, kernel, .. } => vec![input, kernel],
            Op::MaxPool { input, .. } => vec![input],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// A dynamically built computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
    exec: Exec,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_exec(exec: Exec) -> Self {
        Graph {
            exec,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node created after the first `len`, along with any
    /// gradients. Handles to dropped nodes must not be used afterwards.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.zero_grad();
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A leaf whose gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        let g = self.grad(v)?.to_vec();
        Tensor::new(self.value(v).shape().to_vec(), g).ok()
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, w: Var) -> Result<Var> {
        let (sa, sw) = (self.value(a).shape(), self.value(w).shape());
        if sa.len() != 2 || sw.len() != 2 || sa[1] != sw[0] {
            return Err(Error::dim("matmul", sa, sw));
        }
        let (rows, inner, cols) = (sa[0], sa[1], sw[1]);
        let data = kernels::matmul(self.exec, self.value(a).data(), self.value(w).data(), rows, inner, cols);
        let value = Tensor::new(vec![rows, cols], data)?;
        let rg = self.any_grad(&[a, w]);
        Ok(self.push(Op::MatMul { a, w, rows, inner, cols }, value, rg))
    }

    /// Pointwise `a ∘ b`; `b` may broadcast onto `a` (right-aligned).
    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let map = Broadcast::resolve(sa, sb).ok_or_else(|| Error::dim("elementwise", sa, sb))?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = da
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = db[map.index(i)];
                match kind {
                    Elementwise::Add => x + y,
                    Elementwise::Sub => x - y,
                    Elementwise::Mul => x * y,
                }
            })
            .collect();
        let value = Tensor::new(sa.to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::Binary { kind, a, b, map }, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    /// `1 - a`, the reset gate.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 - x);
        let rg = self.any_grad(&[a]);
        self.push(Op::ScalarSub { a }, value, rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        let rg = self.any_grad(&[a]);
        self.push(Op::Scale { a, k }, value, rg)
    }

    pub fn activation(&mut self, kind: Activation, a: Var) -> Var {
        let value = self.value(a).map(|x| kind.apply(x));
        let rg = self.any_grad(&[a]);
        self.push(Op::Activation { kind, a }, value, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    /// Binary spike emission; backward uses `1 - tanh(a)^2`.
    pub fn step_surrogate(&mut self, a: Var) -> Var {
        let value = self.value(a).map(heaviside);
        let rg = self.any_grad(&[a]);
        self.push(Op::Step { a }, value, rg)
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Op::Sum { a }, Tensor::scalar(total), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::Reshape { a }, value, rg))
    }

    /// Mean over rows of `-Σ target · log softmax(logits)`.
    pub fn softmax_xent(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let rows = self.value(logits).rows();
        self.softmax_xent_weighted(logits, target, &vec![1.0 / rows as f64; rows])
    }

    /// `Σ_i weight_i · (-Σ_k target_ik · log softmax(logits_i)_k)`.
    pub fn softmax_xent_weighted(&mut self, logits: Var, target: &Tensor, weights: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        check_loss_shapes("softmax_xent", z, target, weights)?;
        let k = z.cols();
        let mut probs = Vec::with_capacity(z.numel());
        let mut total = 0.0;
        for (i, row) in z.data().chunks(k).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let t = target.row(i);
            let mut nll = 0.0;
            for (j, &zj) in row.iter().enumerate() {
                let logp = zj - lse;
                probs.push(logp.exp());
                if t[j] != 0.0 {
                    nll -= t[j] * logp;
                }
            }
            total += weights[i] * nll;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("softmax_xent"));
        }
        let rg = self.any_grad(&[logits]);
        let op = Op::SoftmaxXent {
            logits,
            probs,
            target: target.data().to_vec(),
            weights: weights.to_vec(),
        };
        Ok(self.push(op, Tensor::scalar(total), rg))
    }

    /// Mean over rows of the per-row Bernoulli negative log-likelihood,
    /// summed over the row's units.
    pub fn bernoulli_nll(&mut self, probs: Var, target: &Tensor) -> Result<Var> {
        let rows = self.value(probs).rows();
        self.bernoulli_nll_weighted(probs, target, &vec![1.0 / rows as f64; rows])
    }

    pub fn bernoulli_nll_weighted(&mut self, probs: Var, target: &Tensor, weights: &[f64]) -> Result<Var> {
        let p = self.value(probs);
        check_loss_shapes("bernoulli_nll", p, target, weights)?;
        if let Some(bad) = p.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("probability {bad} outside [0, 1]")));
        }
        let k = p.cols();
        let mut total = 0.0;
        for (i, (row, t)) in p.data().chunks(k).zip(target.data().chunks(k)).enumerate() {
            if weights[i] == 0.0 {
                continue;
            }
            total += weights[i] * bernoulli_row_nll(row, t);
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("bernoulli_nll"));
        }
        let rg = self.any_grad(&[probs]);
        let op = Op::BernoulliNll {
            probs,
            target: target.data().to_vec(),
            weights: weights.to_vec(),
        };
        Ok(self.push(op, Tensor::scalar(total), rg))
    }

    pub fn loss(&mut self, kind: LossKind, out: Var, target: &Tensor) -> Result<Var> {
        match kind {
            LossKind::SoftmaxXent => self.softmax_xent(out, target),
            LossKind::BernoulliNll => self.bernoulli_nll(out, target),
        }
    }

    /// Cross-correlation of `input[b×c×h×w]` with `kernel[f×c×kh×kw]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (si, sk) = (self.value(input).shape(), self.value(kernel).shape());
        let geom = ConvGeometry::new(si, sk, stride, padding).ok_or_else(|| Error::dim("conv2d", si, sk))?;
        let data = kernels::conv2d(self.exec, &geom, self.value(input).data(), self.value(kernel).data());
        let value = Tensor::new(geom.output_shape(), data)?;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(Op::Conv2d { input, kernel, geom }, value, rg))
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let s = self.value(input).shape().to_vec();
        if s.len() != 4 || window == 0 || window > s[2] || window > s[3] {
            return Err(Error::dim("maxpool2d", &s, &[window, window]));
        }
        let (data, argmax) = kernels::maxpool2d(self.value(input).data(), &s, window);
        let value = Tensor::new(vec![s[0], s[1], s[2] / window, s[3] / window], data)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(Op::MaxPool { input, argmax }, value, rg))
    }

    /// Populates gradients of every `requires_grad` node reachable from the
    /// scalar `root`. Contributions from fan-out accumulate additively.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract("backward called twice without zero_grad".into()));
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_value.shape()
            )));
        }
        if !root_value.is_finite() {
            return Err(Error::NonFinite("backward root"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if node.op.parents().iter().any(|p| p.0 >= i) {
                return Err(Error::Internal(format!("node {i} refers to a later node")));
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(up) = upper[0].as_deref() else {
                continue;
            };
            self.backprop_node(node, up, lower);
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("backward"));
            }
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    fn backprop_node(&self, node: &Node, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let exec = self.exec;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, w, rows, inner, cols } => {
                if wants(a) {
                    let g = kernels::matmul_a_bt(exec, up, val(w).data(), rows, inner, cols);
                    accumulate(grads, a, &g);
                }
                if wants(w) {
                    let g = kernels::matmul_at_b(exec, val(a).data(), up, rows, inner, cols);
                    accumulate(grads, w, &g);
                }
            }
            Op::Binary { kind, a, b, map } => {
                let (a, b) = (*a, *b);
                if wants(a) {
                    match kind {
                        Elementwise::Add | Elementwise::Sub => accumulate(grads, a, up),
                        Elementwise::Mul => {
                            let db = val(b).data();
                            let g: Vec<f64> = up.iter().enumerate().map(|(i, u)| u * db[map.index(i)]).collect();
                            accumulate(grads, a, &g);
                        }
                    }
                }
                if wants(b) {
                    let mut g = vec![0.0; val(b).numel()];
                    match kind {
                        Elementwise::Add => up.iter().enumerate().for_each(|(i, u)| g[map.index(i)] += u),
                        Elementwise::Sub => up.iter().enumerate().for_each(|(i, u)| g[map.index(i)] -= u),
                        Elementwise::Mul => {
                            let da = val(a).data();
                            up.iter().enumerate().for_each(|(i, u)| g[map.index(i)] += u * da[i]);
                        }
                    }
                    accumulate(grads, b, &g);
                }
            }
            &Op::ScalarSub { a } => {
                let g: Vec<f64> = up.iter().map(|u| -u).collect();
                accumulate(grads, a, &g);
            }
            &Op::Scale { a, k } => {
                let g: Vec<f64> = up.iter().map(|u| k * u).collect();
                accumulate(grads, a, &g);
            }
            &Op::Activation { kind, a } => {
                let x = val(a).data();
                let y = node.value.data();
                let g: Vec<f64> = up
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(u, (&x, &y))| u * kind.derivative(x, y))
                    .collect();
                accumulate(grads, a, &g);
            }
            &Op::Step { a } => {
                let g: Vec<f64> = up.iter().zip(val(a).data()).map(|(u, &x)| u * surrogate_grad(x)).collect();
                accumulate(grads, a, &g);
            }
            &Op::Sum { a } => {
                let g = vec![up[0]; val(a).numel()];
                accumulate(grads, a, &g);
            }
            &Op::Reshape { a } => accumulate(grads, a, up),
            Op::SoftmaxXent {
                logits,
                probs,
                target,
                weights,
            } => {
                let k = val(*logits).cols();
                let mut g = vec![0.0; probs.len()];
                for (i, w) in weights.iter().enumerate() {
                    let t = &target[i * k..(i + 1) * k];
                    let t_sum: f64 = t.iter().sum();
                    for j in 0..k {
                        g[i * k + j] = up[0] * w * (probs[i * k + j] * t_sum - t[j]);
                    }
                }
                accumulate(grads, *logits, &g);
            }
            Op::BernoulliNll { probs, target, weights } => {
                let p = val(*probs).data();
                let k = val(*probs).cols();
                let g: Vec<f64> = p
                    .iter()
                    .zip(target)
                    .enumerate()
                    .map(|(idx, (&p, &t))| {
                        if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                            return 0.0;
                        }
                        up[0] * weights[idx / k] * ((1.0 - t) / (1.0 - p) - t / p)
                    })
                    .collect();
                accumulate(grads, *probs, &g);
            }
            &Op::Conv2d { input, kernel, ref geom } => {
                if wants(input) {
                    let g = kernels::conv2d_grad_input(exec, geom, up, val(kernel).data());
                    accumulate(grads, input, &g);
                }
                if wants(kernel) {
                    let g = kernels::conv2d_grad_kernel(exec, geom, up, val(input).data());
                    accumulate(grads, kernel, &g);
                }
            }
            Op::MaxPool { input, argmax } => {
                let mut g = vec![0.0; val(*input).numel()];
                for (u, &idx) in up.iter().zip(argmax) {
                    g[idx] += u;
                }
                accumulate(grads, *input, &g);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: &[f64]) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(contribution).for_each(|(g, c)| *g += c),
        slot @ None => *slot = Some(contribution.to_vec()),
    }
}

fn check_loss_shapes(op: &'static str, out: &Tensor, target: &Tensor, weights: &[f64]) -> Result<()> {
    if out.rank() != 2 || out.shape() != target.shape() {
        return Err(Error::dim(op, out.shape(), target.shape()));
    }
    if weights.len() != out.rows() {
        return Err(Error::dim(op, &[out.rows()], &[weights.len()]));
    }
    Ok(())
}

/// `-Σ_k [t log p + (1 - t) log(1 - p)]` with `p` clipped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bernoulli_row_nll(probs: &[f64], target: &[f64]) -> f64 {
    probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum()
}
