//! Reverse-mode gradient accumulation over a fixed computation graph.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! then walks the nodes in reverse and accumulates `d loss / d input` into
//! each node's gradient buffer. Nodes can only reference earlier nodes, so
//! creation order is already a topological order. A tensor used several
//! times receives the sum of the per-use gradients.

use alloc::vec::Vec;

use crate::tensor::{ShapeError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Matrix plus a `1 x cols` row vector broadcast over every row.
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Matrix times a `1 x 1` scalar node.
    ScaleByNode(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Hadamard(NodeId, NodeId),
    ColSums(NodeId),
    FullSum(NodeId),
    Transpose(NodeId),
    Softmax(NodeId),
    Entry(NodeId, usize, usize),
    Row(NodeId, usize),
    StackRows(Vec<NodeId>),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Computation graph for one forward/backward pass.
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let grad = Tensor::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input tensor (constant or parameter value).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// `m + 1 . r` where `r` is `1 x cols(m)`: adds `r` to every row of `m`.
    pub fn add_row_broadcast(&mut self, m: NodeId, r: NodeId) -> Result<NodeId, ShapeError> {
        let (mv, rv) = (self.value(m), self.value(r));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(ShapeError { op: "add_row_broadcast", lhs: mv.shape(), rhs: rv.shape() });
        }
        let value = Tensor::from_fn(mv.rows(), mv.cols(), |i, j| mv.get(i, j) + rv.get(0, j));
        Ok(self.push(value, Op::AddRowBroadcast(m, r)))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.value(a).scale(k);
        self.push(value, Op::Scale(a, k))
    }

    /// Elementwise product of `m` with the value of the `1 x 1` node `s`.
    pub fn scale_by_node(&mut self, m: NodeId, s: NodeId) -> Result<NodeId, ShapeError> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(ShapeError { op: "scale_by_node", lhs: self.value(m).shape(), rhs: sv.shape() });
        }
        let k = sv.scalar_value();
        let value = self.value(m).scale(k);
        Ok(self.push(value, Op::ScaleByNode(m, s)))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(libm::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    /// Per-column sums as a `1 x cols` node.
    pub fn col_sums(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).col_sums();
        self.push(value, Op::ColSums(a))
    }

    /// Sum of every entry as a `1 x 1` node.
    pub fn full_sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::FullSum(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Softmax over the entries of a `1 x n` node.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, ShapeError> {
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(ShapeError { op: "softmax", lhs: av.shape(), rhs: (1, av.cols()) });
        }
        let max = av.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exps: Vec<f64> = av.data().iter().map(|&v| libm::exp(v - max)).collect();
        let total: f64 = exps.iter().sum();
        let value = Tensor::from_vec(1, av.cols(), exps.into_iter().map(|e| e / total).collect());
        Ok(self.push(value, Op::Softmax(a)))
    }

    /// Extracts entry `(i, j)` as a `1 x 1` node.
    pub fn entry(&mut self, a: NodeId, i: usize, j: usize) -> NodeId {
        let value = Tensor::scalar(self.value(a).get(i, j));
        self.push(value, Op::Entry(a, i, j))
    }

    /// Extracts row `i` as a `1 x cols` node.
    pub fn row(&mut self, a: NodeId, i: usize) -> NodeId {
        let av = self.value(a);
        let value = Tensor::from_vec(1, av.cols(), av.row(i).to_vec());
        self.push(value, Op::Row(a, i))
    }

    /// Stacks `1 x c` row nodes into a `k x c` node.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, ShapeError> {
        let cols = self.value(rows[0]).cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let rv = self.value(r);
            if rv.shape() != (1, cols) {
                return Err(ShapeError { op: "stack_rows", lhs: (1, cols), rhs: rv.shape() });
            }
            data.extend_from_slice(rv.data());
        }
        let value = Tensor::from_vec(rows.len(), cols, data);
        Ok(self.push(value, Op::StackRows(rows.to_vec())))
    }

    fn add_grad(&mut self, id: NodeId, g: &Tensor) {
        self.nodes[id.0].grad.add_assign(g).expect("gradient shape mismatch");
    }

    /// Seeds the `1 x 1` output node with gradient 1 and accumulates
    /// gradients into every node reachable backwards from it.
    pub fn backward(&mut self, output: NodeId) -> Result<(), ShapeError> {
        if self.value(output).shape() != (1, 1) {
            return Err(ShapeError { op: "backward", lhs: self.value(output).shape(), rhs: (1, 1) });
        }
        self.nodes[output.0].grad.set(0, 0, 1.0);
        for idx in (0..=output.0).rev() {
            // Take the node's grad out to appease the borrow checker; it is
            // restored below.
            let g = core::mem::replace(&mut self.nodes[idx].grad, Tensor::zeros(0, 0));
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.matmul(&self.value(b).transpose()).expect("matmul backward");
                    let gb = self.value(a).transpose().matmul(&g).expect("matmul backward");
                    self.add_grad(a, &ga);
                    self.add_grad(b, &gb);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.add_grad(a, &g);
                    self.add_grad(b, &g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.add_grad(a, &g);
                    let neg = g.scale(-1.0);
                    self.add_grad(b, &neg);
                }
                Op::AddRowBroadcast(m, r) => {
                    let (m, r) = (*m, *r);
                    self.add_grad(m, &g);
                    let gr = g.col_sums();
                    self.add_grad(r, &gr);
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    let ga = g.scale(k);
                    self.add_grad(a, &ga);
                }
                Op::ScaleByNode(m, s) => {
                    let (m, s) = (*m, *s);
                    let k = self.value(s).scalar_value();
                    let gm = g.scale(k);
                    let gs = Tensor::scalar(g.hadamard(self.value(m)).expect("scale_by_node backward").sum());
                    self.add_grad(m, &gm);
                    self.add_grad(s, &gs);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let ga = Tensor::from_fn(y.rows(), y.cols(), |i, j| {
                        let yv = y.get(i, j);
                        g.get(i, j) * (1.0 - yv * yv)
                    });
                    self.add_grad(a, &ga);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let ga = Tensor::from_fn(y.rows(), y.cols(), |i, j| {
                        let yv = y.get(i, j);
                        g.get(i, j) * yv * (1.0 - yv)
                    });
                    self.add_grad(a, &ga);
                }
                Op::Hadamard(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.hadamard(self.value(b)).expect("hadamard backward");
                    let gb = g.hadamard(self.value(a)).expect("hadamard backward");
                    self.add_grad(a, &ga);
                    self.add_grad(b, &gb);
                }
                Op::ColSums(a) => {
                    let a = *a;
                    let av = self.value(a);
                    let ga = Tensor::from_fn(av.rows(), av.cols(), |_, j| g.get(0, j));
                    self.add_grad(a, &ga);
                }
                Op::FullSum(a) => {
                    let a = *a;
                    let av = self.value(a);
                    let gv = g.scalar_value();
                    let ga = Tensor::from_fn(av.rows(), av.cols(), |_, _| gv);
                    self.add_grad(a, &ga);
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let ga = g.transpose();
                    self.add_grad(a, &ga);
                }
                Op::Softmax(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let dot: f64 = (0..y.cols()).map(|j| g.get(0, j) * y.get(0, j)).sum();
                    let ga = Tensor::from_fn(1, y.cols(), |_, j| y.get(0, j) * (g.get(0, j) - dot));
                    self.add_grad(a, &ga);
                }
                Op::Entry(a, i, j) => {
                    let (a, i, j) = (*a, *i, *j);
                    let av = self.value(a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    ga.set(i, j, g.scalar_value());
                    self.add_grad(a, &ga);
                }
                Op::Row(a, i) => {
                    let (a, i) = (*a, *i);
                    let av = self.value(a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for j in 0..av.cols() {
                        ga.set(i, j, g.get(0, j));
                    }
                    self.add_grad(a, &ga);
                }
                Op::StackRows(rows) => {
                    let rows = rows.clone();
                    for (i, r) in rows.into_iter().enumerate() {
                        let gr = Tensor::from_vec(1, g.cols(), g.row(i).to_vec());
                        self.add_grad(r, &gr);
                    }
                }
            }
            self.nodes[idx].grad = g;
        }
        Ok(())
    }
}
