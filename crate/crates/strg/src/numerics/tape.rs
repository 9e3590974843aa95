//! Reverse-mode automatic differentiation over [`Dense2D`] values.
//!
//! A [`Tape`] records primitive operations during a forward pass as a
//! topologically ordered DAG. [`Tape::backward`] replays the record in
//! reverse and accumulates gradients for every node; tracked leaves are
//! the trainable parameters. One forward/backward pass owns its tape
//! exclusively; recorded values are immutable once produced.

use crate::error::{Error, Result};
use crate::numerics::dense::Dense2D;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { tracked: bool },
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Broadcast-add a 1 x c row to every row of a.
    AddRow(NodeId, NodeId),
    /// Broadcast-add an r x 1 column to every column of a.
    AddCol(NodeId, NodeId),
    Transpose(NodeId),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Sqrt(NodeId),
    SoftmaxRows(NodeId),
    Sum(NodeId),
    Scale(NodeId, f64),
    Reshape(NodeId),
    /// 3x3 convolution, stride 1, zero padding; kernel is a 3x3 node,
    /// bias a 1x1 node added to every output cell.
    Conv3x3 { input: NodeId, kernel: NodeId, bias: NodeId },
    AvgPool { input: NodeId, out_rows: usize, out_cols: usize },
    /// Bilinear resize to a target shape.
    Resize { input: NodeId, out_rows: usize, out_cols: usize },
}

struct Node {
    op: Op,
    value: Dense2D,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Dense2D>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the given node. Zero-shaped
    /// nodes that did not contribute to the loss return `None`.
    pub fn get(&self, id: NodeId) -> Option<&Dense2D> {
        self.grads[id.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Dense2D {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Dense2D) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an untracked input; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Dense2D) -> NodeId {
        self.push(Op::Leaf { tracked: false }, value)
    }

    /// Record a tracked parameter leaf.
    pub fn param(&mut self, value: Dense2D) -> NodeId {
        self.push(Op::Leaf { tracked: true }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != m.cols() {
            return Err(Error::dimension("add_row", m.shape(), r.shape()));
        }
        let v = Dense2D::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + r.get(0, j));
        Ok(self.push(Op::AddRow(a, row), v))
    }

    pub fn add_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (m, c) = (self.value(a), self.value(col));
        if c.cols() != 1 || c.rows() != m.rows() {
            return Err(Error::dimension("add_col", m.shape(), c.shape()));
        }
        let v = Dense2D::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + c.get(i, 0));
        Ok(self.push(Op::AddCol(a, col), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(Error::dimension("concat_rows", x.shape(), y.shape()));
        }
        let mut values = x.values().to_vec();
        values.extend_from_slice(y.values());
        let v = Dense2D::from_vec(x.rows() + y.rows(), x.cols(), values)?;
        Ok(self.push(Op::ConcatRows(a, b), v))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(Error::dimension("concat_cols", x.shape(), y.shape()));
        }
        let v = Dense2D::from_fn(x.rows(), x.cols() + y.cols(), |i, j| {
            if j < x.cols() {
                x.get(i, j)
            } else {
                y.get(i, j - x.cols())
            }
        });
        Ok(self.push(Op::ConcatCols(a, b), v))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    /// Elementwise square root. Inputs must be nonnegative.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).min() < 0.0 {
            return Err(Error::Domain("sqrt of negative entry".into()));
        }
        let v = self.value(a).map(f64::sqrt);
        Ok(self.push(Op::Sqrt(a), v))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(self.value(a));
        self.push(Op::SoftmaxRows(a), v)
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        // recorded even when non-finite so overflow diagnostics can
        // point at the offending node instead of panicking here
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Dense2D::filled(1, 1, s))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = self.value(a).reshaped(rows, cols)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    pub fn conv3x3(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, k, b) = (self.value(input), self.value(kernel), self.value(bias));
        if k.shape() != (3, 3) {
            return Err(Error::dimension("conv3x3 kernel", k.shape(), (3, 3)));
        }
        if b.shape() != (1, 1) {
            return Err(Error::dimension("conv3x3 bias", b.shape(), (1, 1)));
        }
        if x.rows() < 3 || x.cols() < 3 {
            return Err(Error::Domain(format!(
                "scene {}x{} smaller than the 3x3 kernel",
                x.rows(),
                x.cols()
            )));
        }
        let v = conv3x3_forward(x, k, b.get(0, 0));
        Ok(self.push(Op::Conv3x3 { input, kernel, bias }, v))
    }

    /// Average pooling onto a fixed output grid; input cells are
    /// partitioned into near-equal buckets.
    pub fn avg_pool(&mut self, input: NodeId, out_rows: usize, out_cols: usize) -> Result<NodeId> {
        let x = self.value(input);
        if out_rows == 0 || out_cols == 0 || out_rows > x.rows() || out_cols > x.cols() {
            return Err(Error::dimension("avg_pool", x.shape(), (out_rows, out_cols)));
        }
        let v = Dense2D::from_fn(out_rows, out_cols, |i, j| {
            let (r0, r1) = bucket(i, out_rows, x.rows());
            let (c0, c1) = bucket(j, out_cols, x.cols());
            let mut s = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    s += x.get(r, c);
                }
            }
            s / ((r1 - r0) * (c1 - c0)) as f64
        });
        Ok(self.push(Op::AvgPool { input, out_rows, out_cols }, v))
    }

    /// Bilinear resize to the target shape (align-corners sampling).
    pub fn resize(&mut self, input: NodeId, out_rows: usize, out_cols: usize) -> Result<NodeId> {
        let x = self.value(input);
        if out_rows == 0 || out_cols == 0 {
            return Err(Error::dimension("resize", x.shape(), (out_rows, out_cols)));
        }
        let v = Dense2D::from_fn(out_rows, out_cols, |i, j| {
            let (i0, i1, fi) = sample_coord(i, out_rows, x.rows());
            let (j0, j1, fj) = sample_coord(j, out_cols, x.cols());
            let top = x.get(i0, j0) * (1.0 - fj) + x.get(i0, j1) * fj;
            let bot = x.get(i1, j0) * (1.0 - fj) + x.get(i1, j1) * fj;
            top * (1.0 - fi) + bot * fi
        });
        Ok(self.push(Op::Resize { input, out_rows, out_cols }, v))
    }

    /// Recompute every non-leaf value from the recorded leaves and check
    /// bit-for-bit agreement with the stored values.
    pub fn replay_matches(&self) -> bool {
        let mut values: Vec<Dense2D> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf { .. } => node.value.clone(),
                op => self.eval_op(op, &values),
            };
            values.push(v);
        }
        values
            .iter()
            .zip(&self.nodes)
            .all(|(v, n)| v.values() == n.value.values() && v.shape() == n.value.shape())
    }

    fn eval_op(&self, op: &Op, values: &[Dense2D]) -> Dense2D {
        let v = |id: NodeId| &values[id.0];
        match *op {
            Op::Leaf { .. } => unreachable!(),
            Op::Matmul(a, b) => v(a).matmul(v(b)).unwrap(),
            Op::Add(a, b) => v(a).add(v(b)).unwrap(),
            Op::Sub(a, b) => v(a).sub(v(b)).unwrap(),
            Op::Mul(a, b) => v(a).hadamard(v(b)).unwrap(),
            Op::AddRow(a, r) => {
                let (m, row) = (v(a), v(r));
                Dense2D::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + row.get(0, j))
            }
            Op::AddCol(a, c) => {
                let (m, col) = (v(a), v(c));
                Dense2D::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + col.get(i, 0))
            }
            Op::Transpose(a) => v(a).transpose(),
            Op::ConcatRows(a, b) => {
                let mut vals = v(a).values().to_vec();
                vals.extend_from_slice(v(b).values());
                Dense2D::from_vec(v(a).rows() + v(b).rows(), v(a).cols(), vals).unwrap()
            }
            Op::ConcatCols(a, b) => {
                let (x, y) = (v(a), v(b));
                Dense2D::from_fn(x.rows(), x.cols() + y.cols(), |i, j| {
                    if j < x.cols() { x.get(i, j) } else { y.get(i, j - x.cols()) }
                })
            }
            Op::Relu(a) => v(a).map(|x| x.max(0.0)),
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::Exp(a) => v(a).map(f64::exp),
            Op::Sqrt(a) => v(a).map(f64::sqrt),
            Op::SoftmaxRows(a) => softmax_rows(v(a)),
            Op::Sum(a) => Dense2D::from_vec(1, 1, vec![v(a).sum()]).unwrap(),
            Op::Scale(a, s) => v(a).scale(s),
            Op::Reshape(a) => {
                let shape = self.nodes[values.len()].value.shape();
                v(a).reshaped(shape.0, shape.1).unwrap()
            }
            Op::Conv3x3 { input, kernel, bias } => {
                conv3x3_forward(v(input), v(kernel), v(bias).get(0, 0))
            }
            Op::AvgPool { input, out_rows, out_cols } => {
                let x = v(input);
                Dense2D::from_fn(out_rows, out_cols, |i, j| {
                    let (r0, r1) = bucket(i, out_rows, x.rows());
                    let (c0, c1) = bucket(j, out_cols, x.cols());
                    let mut s = 0.0;
                    for r in r0..r1 {
                        for c in c0..c1 {
                            s += x.get(r, c);
                        }
                    }
                    s / ((r1 - r0) * (c1 - c0)) as f64
                })
            }
            Op::Resize { input, out_rows, out_cols } => {
                let x = v(input);
                Dense2D::from_fn(out_rows, out_cols, |i, j| {
                    let (i0, i1, fi) = sample_coord(i, out_rows, x.rows());
                    let (j0, j1, fj) = sample_coord(j, out_cols, x.cols());
                    let top = x.get(i0, j0) * (1.0 - fj) + x.get(i0, j1) * fj;
                    let bot = x.get(i1, j0) * (1.0 - fj) + x.get(i1, j1) * fj;
                    top * (1.0 - fi) + bot * fi
                })
            }
        }
    }

    /// Reverse pass from a scalar loss node. Returns the gradient of the
    /// loss with respect to every node that feeds it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage("loss node is not on this tape".into()));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "loss must be scalar, got {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Dense2D>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Dense2D::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, idx: usize, g: &Dense2D, grads: &mut [Option<Dense2D>]) -> Result<()> {
        let mut bump = |id: NodeId, delta: Dense2D| -> Result<()> {
            // untracked leaves never need their gradient materialized
            if matches!(self.nodes[id.0].op, Op::Leaf { tracked: false }) {
                return Ok(());
            }
            match &mut grads[id.0] {
                Some(acc) => *acc = acc.add(&delta)?,
                slot => *slot = Some(delta),
            }
            Ok(())
        };
        let val = |id: NodeId| &self.nodes[id.0].value;
        match self.nodes[idx].op {
            Op::Leaf { .. } => {}
            Op::Matmul(a, b) => {
                bump(a, g.matmul(&val(b).transpose())?)?;
                bump(b, val(a).transpose().matmul(g)?)?;
            }
            Op::Add(a, b) => {
                bump(a, g.clone())?;
                bump(b, g.clone())?;
            }
            Op::Sub(a, b) => {
                bump(a, g.clone())?;
                bump(b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                bump(a, g.hadamard(val(b))?)?;
                bump(b, g.hadamard(val(a))?)?;
            }
            Op::AddRow(a, row) => {
                bump(a, g.clone())?;
                let col_sums = Dense2D::from_fn(1, g.cols(), |_, j| {
                    (0..g.rows()).map(|i| g.get(i, j)).sum()
                });
                bump(row, col_sums)?;
            }
            Op::AddCol(a, col) => {
                bump(a, g.clone())?;
                let row_sums = Dense2D::from_fn(g.rows(), 1, |i, _| {
                    (0..g.cols()).map(|j| g.get(i, j)).sum()
                });
                bump(col, row_sums)?;
            }
            Op::Transpose(a) => bump(a, g.transpose())?,
            Op::ConcatRows(a, b) => {
                let ra = val(a).rows();
                let ga = Dense2D::from_fn(ra, g.cols(), |i, j| g.get(i, j));
                let gb = Dense2D::from_fn(g.rows() - ra, g.cols(), |i, j| g.get(i + ra, j));
                bump(a, ga)?;
                bump(b, gb)?;
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let ga = Dense2D::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                let gb = Dense2D::from_fn(g.rows(), g.cols() - ca, |i, j| g.get(i, j + ca));
                bump(a, ga)?;
                bump(b, gb)?;
            }
            Op::Relu(a) => {
                let x = val(a);
                bump(a, g.zip(x, "relu'", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?)?;
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                bump(a, g.zip(y, "sigmoid'", |gv, yv| gv * yv * (1.0 - yv))?)?;
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                bump(a, g.zip(y, "tanh'", |gv, yv| gv * (1.0 - yv * yv))?)?;
            }
            Op::Exp(a) => {
                let y = &self.nodes[idx].value;
                bump(a, g.hadamard(y)?)?;
            }
            Op::Sqrt(a) => {
                // d sqrt(x)/dx = 1/(2 sqrt(x)); the denominator is floored
                // so exactly-zero entries yield a zero (sub)gradient scale
                // rather than infinity.
                let y = &self.nodes[idx].value;
                bump(a, g.zip(y, "sqrt'", |gv, yv| {
                    if yv < 1e-12 { 0.0 } else { gv * 0.5 / yv }
                })?)?;
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut d = Dense2D::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = (0..y.cols()).map(|j| g.get(i, j) * y.get(i, j)).sum();
                    for j in 0..y.cols() {
                        d.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                bump(a, d)?;
            }
            Op::Sum(a) => {
                let s = g.get(0, 0);
                let x = val(a);
                bump(a, Dense2D::filled(x.rows(), x.cols(), s))?;
            }
            Op::Scale(a, s) => bump(a, g.scale(s))?,
            Op::Reshape(a) => {
                let x = val(a);
                bump(a, g.reshaped(x.rows(), x.cols())?)?;
            }
            Op::Conv3x3 { input, kernel, bias } => {
                let x = val(input);
                let k = val(kernel);
                let (rows, cols) = x.shape();
                let mut gx = Dense2D::zeros(rows, cols);
                let mut gk = Dense2D::zeros(3, 3);
                let mut gb = 0.0;
                for i in 0..rows {
                    for j in 0..cols {
                        let go = g.get(i, j);
                        gb += go;
                        for di in 0..3usize {
                            for dj in 0..3usize {
                                let si = i as isize + di as isize - 1;
                                let sj = j as isize + dj as isize - 1;
                                if si >= 0 && sj >= 0 && (si as usize) < rows && (sj as usize) < cols {
                                    let (si, sj) = (si as usize, sj as usize);
                                    gx.set(si, sj, gx.get(si, sj) + go * k.get(di, dj));
                                    gk.set(di, dj, gk.get(di, dj) + go * x.get(si, sj));
                                }
                            }
                        }
                    }
                }
                bump(input, gx)?;
                bump(kernel, gk)?;
                bump(bias, Dense2D::filled(1, 1, gb))?;
            }
            Op::AvgPool { input, out_rows, out_cols } => {
                let x = val(input);
                let mut gx = Dense2D::zeros(x.rows(), x.cols());
                for i in 0..out_rows {
                    for j in 0..out_cols {
                        let (r0, r1) = bucket(i, out_rows, x.rows());
                        let (c0, c1) = bucket(j, out_cols, x.cols());
                        let share = g.get(i, j) / ((r1 - r0) * (c1 - c0)) as f64;
                        for r in r0..r1 {
                            for c in c0..c1 {
                                gx.set(r, c, gx.get(r, c) + share);
                            }
                        }
                    }
                }
                bump(input, gx)?;
            }
            Op::Resize { input, out_rows, out_cols } => {
                let x = val(input);
                let mut gx = Dense2D::zeros(x.rows(), x.cols());
                for i in 0..out_rows {
                    for j in 0..out_cols {
                        let (i0, i1, fi) = sample_coord(i, out_rows, x.rows());
                        let (j0, j1, fj) = sample_coord(j, out_cols, x.cols());
                        let go = g.get(i, j);
                        gx.set(i0, j0, gx.get(i0, j0) + go * (1.0 - fi) * (1.0 - fj));
                        gx.set(i0, j1, gx.get(i0, j1) + go * (1.0 - fi) * fj);
                        gx.set(i1, j0, gx.get(i1, j0) + go * fi * (1.0 - fj));
                        gx.set(i1, j1, gx.get(i1, j1) + go * fi * fj);
                    }
                }
                bump(input, gx)?;
            }
        }
        Ok(())
    }

    /// Index of the first node holding a non-finite value, if any.
    /// Used to diagnose numerical failures during training.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.nodes.iter().position(|n| !n.value.is_finite())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Dense2D) -> Dense2D {
    let mut out = Dense2D::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let row = x.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..x.cols() {
            let e = (x.get(i, j) - max).exp();
            out.set(i, j, e);
            sum += e;
        }
        for j in 0..x.cols() {
            out.set(i, j, out.get(i, j) / sum);
        }
    }
    out
}

fn conv3x3_forward(x: &Dense2D, k: &Dense2D, bias: f64) -> Dense2D {
    let (rows, cols) = x.shape();
    Dense2D::from_fn(rows, cols, |i, j| {
        let mut s = bias;
        for di in 0..3usize {
            for dj in 0..3usize {
                let si = i as isize + di as isize - 1;
                let sj = j as isize + dj as isize - 1;
                if si >= 0 && sj >= 0 && (si as usize) < rows && (sj as usize) < cols {
                    s += k.get(di, dj) * x.get(si as usize, sj as usize);
                }
            }
        }
        s
    })
}

/// Half-open input range covered by output bucket `i` of `out` over `n` cells.
fn bucket(i: usize, out: usize, n: usize) -> (usize, usize) {
    (i * n / out, ((i + 1) * n / out).max(i * n / out + 1))
}

/// Bilinear sample: neighbor indices and the fractional weight of the
/// second one, align-corners convention.
fn sample_coord(i: usize, out: usize, n: usize) -> (usize, usize, f64) {
    if out <= 1 || n <= 1 {
        let c = (n - 1) / 2;
        return (c, c, 0.0);
    }
    let pos = i as f64 * (n - 1) as f64 / (out - 1) as f64;
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, pos - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::from_rows(&[vec![-1.0, 2.0]]).unwrap());
        let y = t.relu(x);
        assert_eq!(t.value(y).values(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_symmetry_and_row_sums() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::filled(1, 3, 7.5));
        let y = t.softmax_rows(x);
        for v in t.value(y).values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let x2 = t.constant(Dense2D::from_rows(&[vec![0.3, -2.0, 5.1, 0.0]]).unwrap());
        let y2 = t.softmax_rows(x2);
        let s: f64 = t.value(y2).values().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centered_activations() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::zeros(1, 1));
        let s = t.sigmoid(x);
        let h = t.tanh(x);
        assert_eq!(t.value(s).get(0, 0), 0.5);
        assert_eq!(t.value(h).get(0, 0), 0.0);
    }

    #[test]
    fn linear_loss_gradient_is_broadcast_input() {
        // loss = sum(W x) with fixed x: dloss/dW = x^T broadcast over rows
        let mut t = Tape::new();
        let w = t.param(Dense2D::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let x = t.constant(Dense2D::from_rows(&[vec![5.0], vec![7.0]]).unwrap());
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum(y);
        let grads = t.backward(loss).unwrap();
        let gw = grads.get(w).unwrap();
        assert_eq!(gw.values(), &[5.0, 7.0, 5.0, 7.0]);
    }

    #[test]
    fn relu_sum_gradient_is_sign_mask() {
        let mut t = Tape::new();
        let w = t.param(Dense2D::from_rows(&[vec![1.5, -2.0], vec![-0.1, 3.0]]).unwrap());
        let r = t.relu(w);
        let loss = t.sum(r);
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().values(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.param(Dense2D::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn replay_reproduces_recorded_values() {
        let mut t = Tape::new();
        let w = t.param(Dense2D::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7]]).unwrap());
        let x = t.constant(Dense2D::from_rows(&[vec![1.0], vec![-0.5]]).unwrap());
        let y = t.matmul(w, x).unwrap();
        let z = t.tanh(y);
        let s = t.softmax_rows(z);
        let _ = t.sum(s);
        assert!(t.replay_matches());
    }

    #[test]
    fn avg_pool_preserves_constant() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::filled(13, 17, 0.25));
        let p = t.avg_pool(x, 8, 8).unwrap();
        for v in t.value(p).values() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_preserves_constant_and_corners() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::from_fn(8, 8, |i, j| (i * 8 + j) as f64));
        let r = t.resize(x, 20, 20).unwrap();
        let out = t.value(r);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(19, 19), 63.0);
        let c = t.constant(Dense2D::filled(8, 8, 0.4));
        let rc = t.resize(c, 20, 20).unwrap();
        for v in t.value(rc).values() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }
}
