//! Operation tape: forward recording and reverse-order gradient replay.

use super::kernels;
use super::{AutodiffError, Result, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Unary elementwise primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Square,
    Abs,
    Softplus,
}

/// Binary elementwise primitives. The right operand must either match the
/// left shape exactly or be a bias vector matching its last dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy)]
enum OpRecord {
    Leaf,
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    Unary {
        op: UnaryOp,
        a: NodeId,
    },
    Binary {
        op: BinaryOp,
        a: NodeId,
        b: NodeId,
        broadcast: bool,
    },
    Scale {
        a: NodeId,
        c: f64,
    },
    Softmax {
        a: NodeId,
    },
    LogSoftmax {
        a: NodeId,
    },
    Sum {
        a: NodeId,
    },
}

struct Node {
    value: Tensor,
    op: OpRecord,
    needs_grad: bool,
}

/// Ordered record of primitive operations with their backward rules.
///
/// Replaying the records in reverse from a scalar loss populates `grad` on
/// every `requires_grad` tensor reachable from it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Gradients flow into it iff `requires_grad`
    /// is set on the tensor.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        let needs = value.requires_grad;
        self.push(value, OpRecord::Leaf, needs)
    }

    /// Records a 1×n constant row (no gradient).
    pub fn leaf_row(&mut self, data: &[f64]) -> NodeId {
        self.leaf(Tensor::row(data))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert!(self.nodes[id.0].value.is_scalar());
        self.nodes[id.0].value.data()[0]
    }

    /// Gradient of a node, if backward reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad.as_deref()
    }

    /// Removes and returns the gradient buffer of a node.
    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.nodes[id.0].value.grad.take()
    }

    fn push(&mut self, value: Tensor, op: OpRecord, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        id
    }

    fn check_finite(&self, data: &[f64], op: &'static str) -> Result<()> {
        if data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(AutodiffError::NonFinite { op })
        }
    }

    /// Matrix product a[m×k]·b[k×n]. A rank-1 left operand is treated as a
    /// single row and yields a rank-1 result.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = av.as_2d();
        let (k2, n) = bv.as_2d();
        if k != k2 || av.shape().len() > 2 || bv.shape().len() != 2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nn(av.data(), bv.data(), m, k, n, &mut out);
        self.check_finite(&out, "matmul")?;
        let shape = if av.shape().len() == 1 {
            vec![n]
        } else {
            vec![m, n]
        };
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        Ok(self.push(Tensor::new(shape, out)?, OpRecord::Matmul { a, b }, needs))
    }

    /// Unary or binary elementwise primitive selected by tag. Binary tags
    /// require `b`; unary tags reject it.
    pub fn elementwise(
        &mut self,
        unary: Option<UnaryOp>,
        binary: Option<BinaryOp>,
        a: NodeId,
        b: Option<NodeId>,
    ) -> Result<NodeId> {
        match (unary, binary, b) {
            (Some(op), None, None) => self.unary(op, a),
            (None, Some(op), Some(b)) => self.binary(op, a, b),
            _ => Err(AutodiffError::Contract(
                "elementwise: tag arity does not match operand count".into(),
            )),
        }
    }

    pub fn unary(&mut self, op: UnaryOp, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        if op == UnaryOp::Log {
            if let Some(bad) = av.data().iter().find(|&&v| v <= 0.0) {
                return Err(AutodiffError::NumericDomain {
                    op: "log",
                    detail: format!("input {bad} is not strictly positive"),
                });
            }
        }
        let out: Vec<f64> = av.data().iter().map(|&x| unary_fwd(op, x)).collect();
        if !out.iter().all(|v| v.is_finite()) {
            return match op {
                UnaryOp::Exp => Err(AutodiffError::NumericDomain {
                    op: "exp",
                    detail: "overflow to non-finite".into(),
                }),
                _ => Err(AutodiffError::NonFinite { op: unary_name(op) }),
            };
        }
        let shape = av.shape().to_vec();
        let needs = self.nodes[a.0].needs_grad;
        Ok(self.push(Tensor::new(shape, out)?, OpRecord::Unary { op, a }, needs))
    }

    pub fn binary(&mut self, op: BinaryOp, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if bv.shape().len() == 1 && av.shape().last() == Some(&bv.shape()[0]) {
            true
        } else {
            return Err(AutodiffError::ShapeMismatch {
                op: binary_name(op),
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        };
        let bd = bv.data();
        let cols = bd.len();
        let out: Vec<f64> = if broadcast {
            av.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| binary_fwd(op, x, bd[i % cols]))
                .collect()
        } else {
            av.data()
                .iter()
                .zip(bd)
                .map(|(&x, &y)| binary_fwd(op, x, y))
                .collect()
        };
        self.check_finite(&out, binary_name(op))?;
        let shape = av.shape().to_vec();
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        Ok(self.push(
            Tensor::new(shape, out)?,
            OpRecord::Binary {
                op,
                a,
                b,
                broadcast,
            },
            needs,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Relu, a)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Square, a)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Abs, a)
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Softplus, a)
    }

    /// Multiplication by a compile-time constant scalar.
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let out: Vec<f64> = av.data().iter().map(|&x| x * c).collect();
        self.check_finite(&out, "scale")?;
        let shape = av.shape().to_vec();
        let needs = self.nodes[a.0].needs_grad;
        Ok(self.push(Tensor::new(shape, out)?, OpRecord::Scale { a, c }, needs))
    }

    /// Row-wise softmax computed via max-shifted logsumexp. Rank-1 input is
    /// one row.
    pub fn softmax_logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.rowwise(a, OpRecord::Softmax { a }, softmax_row)
    }

    /// Row-wise log-softmax (max-shifted).
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.rowwise(a, OpRecord::LogSoftmax { a }, log_softmax_row)
    }

    fn rowwise(
        &mut self,
        a: NodeId,
        record: OpRecord,
        f: fn(&[f64], &mut [f64]),
    ) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let (rows, cols) = av.as_2d();
        if cols == 0 {
            return Err(AutodiffError::Contract("softmax over empty rows".into()));
        }
        let mut out = vec![0.0; rows * cols];
        for (o_row, i_row) in out.chunks_mut(cols).zip(av.data().chunks(cols)) {
            f(i_row, o_row);
        }
        self.check_finite(&out, "softmax")?;
        let shape = av.shape().to_vec();
        let needs = self.nodes[a.0].needs_grad;
        Ok(self.push(Tensor::new(shape, out)?, record, needs))
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let s: f64 = av.data().iter().sum();
        if !s.is_finite() {
            return Err(AutodiffError::NonFinite { op: "sum" });
        }
        let needs = self.nodes[a.0].needs_grad;
        Ok(self.push(Tensor::scalar(s), OpRecord::Sum { a }, needs))
    }

    /// Populates gradients of every `requires_grad` tensor reachable from
    /// `loss` by replaying the tape in reverse.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        self.nodes[loss.0].value.grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].value.grad.take() else {
                continue;
            };
            let op = self.nodes[i].op;
            self.propagate(&op, i, &g);
            self.nodes[i].value.grad = Some(g);
        }
        Ok(())
    }

    fn grad_buf(&mut self, id: NodeId) -> Option<&mut Vec<f64>> {
        if !self.nodes[id.0].needs_grad {
            return None;
        }
        let len = self.nodes[id.0].value.len();
        Some(
            self.nodes[id.0]
                .value
                .grad
                .get_or_insert_with(|| vec![0.0; len]),
        )
    }

    fn propagate(&mut self, op: &OpRecord, out_idx: usize, g: &[f64]) {
        match *op {
            OpRecord::Leaf => {}
            OpRecord::Matmul { a, b } => {
                let (m, k) = self.nodes[a.0].value.as_2d();
                let (_, n) = self.nodes[b.0].value.as_2d();
                if self.nodes[a.0].needs_grad {
                    let b_data = self.nodes[b.0].value.data_arc();
                    if let Some(ga) = self.grad_buf(a) {
                        // ga[m×k] += g[m×n] · b[k×n]ᵀ
                        kernels::matmul_nt_acc(g, &b_data, m, n, k, ga);
                    }
                }
                if self.nodes[b.0].needs_grad {
                    let a_data = self.nodes[a.0].value.data_arc();
                    if let Some(gb) = self.grad_buf(b) {
                        // gb[k×n] += a[m×k]ᵀ · g[m×n]
                        kernels::matmul_tn_acc(&a_data, g, k, m, n, gb);
                    }
                }
            }
            OpRecord::Unary { op, a } => {
                if !self.nodes[a.0].needs_grad {
                    return;
                }
                // Local derivative from input x and output y, whichever is cheaper.
                let x = self.nodes[a.0].value.data_arc();
                let y = self.nodes[out_idx].value.data_arc();
                let len = x.len();
                let Some(ga) = self.grad_buf(a) else {
                    return;
                };
                match op {
                    UnaryOp::Relu => {
                        for i in 0..len {
                            if x[i] > 0.0 {
                                ga[i] += g[i];
                            }
                        }
                    }
                    UnaryOp::Sigmoid => {
                        for i in 0..len {
                            ga[i] += g[i] * y[i] * (1.0 - y[i]);
                        }
                    }
                    UnaryOp::Tanh => {
                        for i in 0..len {
                            ga[i] += g[i] * (1.0 - y[i] * y[i]);
                        }
                    }
                    UnaryOp::Exp => {
                        for i in 0..len {
                            ga[i] += g[i] * y[i];
                        }
                    }
                    UnaryOp::Log => {
                        for i in 0..len {
                            ga[i] += g[i] / x[i];
                        }
                    }
                    UnaryOp::Square => {
                        for i in 0..len {
                            ga[i] += g[i] * 2.0 * x[i];
                        }
                    }
                    UnaryOp::Abs => {
                        // Subgradient 0 at the kink.
                        for i in 0..len {
                            ga[i] += g[i] * sign0(x[i]);
                        }
                    }
                    UnaryOp::Softplus => {
                        for i in 0..len {
                            ga[i] += g[i] * stable_sigmoid(x[i]);
                        }
                    }
                }
            }
            OpRecord::Binary {
                op,
                a,
                b,
                broadcast,
            } => {
                let cols = self.nodes[b.0].value.len();
                if self.nodes[a.0].needs_grad {
                    let b_data = self.nodes[b.0].value.data_arc();
                    if let Some(ga) = self.grad_buf(a) {
                        match op {
                            BinaryOp::Add => {
                                for (gi, &gv) in ga.iter_mut().zip(g) {
                                    *gi += gv;
                                }
                            }
                            BinaryOp::Sub => {
                                for (gi, &gv) in ga.iter_mut().zip(g) {
                                    *gi += gv;
                                }
                            }
                            BinaryOp::Mul => {
                                for (i, (gi, &gv)) in ga.iter_mut().zip(g).enumerate() {
                                    let bv = if broadcast {
                                        b_data[i % cols]
                                    } else {
                                        b_data[i]
                                    };
                                    *gi += gv * bv;
                                }
                            }
                        }
                    }
                }
                if self.nodes[b.0].needs_grad {
                    let a_data = self.nodes[a.0].value.data_arc();
                    if let Some(gb) = self.grad_buf(b) {
                        match op {
                            BinaryOp::Add => {
                                for (i, &gv) in g.iter().enumerate() {
                                    let j = if broadcast { i % cols } else { i };
                                    gb[j] += gv;
                                }
                            }
                            BinaryOp::Sub => {
                                for (i, &gv) in g.iter().enumerate() {
                                    let j = if broadcast { i % cols } else { i };
                                    gb[j] -= gv;
                                }
                            }
                            BinaryOp::Mul => {
                                for (i, &gv) in g.iter().enumerate() {
                                    let j = if broadcast { i % cols } else { i };
                                    gb[j] += gv * a_data[i];
                                }
                            }
                        }
                    }
                }
            }
            OpRecord::Scale { a, c } => {
                if let Some(ga) = self.grad_buf(a) {
                    for (gi, &gv) in ga.iter_mut().zip(g) {
                        *gi += gv * c;
                    }
                }
            }
            OpRecord::Softmax { a } => {
                if !self.nodes[a.0].needs_grad {
                    return;
                }
                let (_, cols) = self.nodes[a.0].value.as_2d();
                let p = self.nodes[out_idx].value.data_arc();
                let len = p.len();
                let Some(ga) = self.grad_buf(a) else {
                    return;
                };
                for r in 0..len / cols {
                    let s = r * cols;
                    let p_row = &p[s..s + cols];
                    let g_row = &g[s..s + cols];
                    let dot: f64 = p_row.iter().zip(g_row).map(|(&pv, &gv)| pv * gv).sum();
                    for j in 0..cols {
                        ga[s + j] += p_row[j] * (g_row[j] - dot);
                    }
                }
            }
            OpRecord::LogSoftmax { a } => {
                if !self.nodes[a.0].needs_grad {
                    return;
                }
                let (_, cols) = self.nodes[a.0].value.as_2d();
                let y = self.nodes[out_idx].value.data_arc();
                let len = y.len();
                let Some(ga) = self.grad_buf(a) else {
                    return;
                };
                for r in 0..len / cols {
                    let s = r * cols;
                    let g_row = &g[s..s + cols];
                    let g_sum: f64 = g_row.iter().sum();
                    for j in 0..cols {
                        ga[s + j] += g_row[j] - y[s + j].exp() * g_sum;
                    }
                }
            }
            OpRecord::Sum { a } => {
                if let Some(ga) = self.grad_buf(a) {
                    let gv = g[0];
                    for gi in ga.iter_mut() {
                        *gi += gv;
                    }
                }
            }
        }
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn unary_fwd(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Sigmoid => stable_sigmoid(x),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Square => x * x,
        UnaryOp::Abs => x.abs(),
        UnaryOp::Softplus => softplus(x),
    }
}

fn binary_fwd(op: BinaryOp, x: f64, y: f64) -> f64 {
    match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
    }
}

fn unary_name(op: UnaryOp) -> &'static str {
    match op {
        UnaryOp::Relu => "relu",
        UnaryOp::Sigmoid => "sigmoid",
        UnaryOp::Tanh => "tanh",
        UnaryOp::Exp => "exp",
        UnaryOp::Log => "log",
        UnaryOp::Square => "square",
        UnaryOp::Abs => "abs",
        UnaryOp::Softplus => "softplus",
    }
}

fn binary_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}
