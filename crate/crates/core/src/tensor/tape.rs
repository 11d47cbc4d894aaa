//! Tape-based reverse-mode differentiation over [`DenseMatrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Node ids grow
//! monotonically, so the recorded graph is acyclic by construction and the
//! backward pass is a single sweep over ids in decreasing order.

use std::cell::RefCell;
use std::rc::Rc;

use super::{DenseMatrix, TensorError};

/// Threshold below which a row counts as degenerate in strict normalisation.
pub const DEGENERATE_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Clamp(usize, f64, f64),
    Relu(usize),
    Sigmoid(usize),
    Log(usize),
    Exp(usize),
    RowSoftmax(usize),
    SumRows(usize),
    MeanRows(usize),
    MaxRows(usize, Vec<usize>),
    SumAll(usize),
    RowSums(usize),
    RowL2Normalize(usize, f64),
    FrobeniusSq(usize),
    Transpose(usize),
    ConcatRows(Vec<usize>),
    LayerNorm(usize, f64),
}

struct Node {
    value: Rc<DenseMatrix>,
    op: Op,
    needs_grad: bool,
}

/// Records one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a recorded value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = self.value();
        write!(f, "Var#{}({}x{})", self.id, v.rows(), v.cols())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&self, value: DenseMatrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: DenseMatrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: DenseMatrix, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<DenseMatrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    fn unary(&self, a: usize, value: DenseMatrix, op: Op) -> Var<'_> {
        let needs = self.needs(&[a]);
        self.push(value, op, needs)
    }

    fn binary(&self, a: usize, b: usize, value: DenseMatrix, op: Op) -> Var<'_> {
        let needs = self.needs(&[a, b]);
        self.push(value, op, needs)
    }

    /// Reverse sweep from a 1×1 output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        let out_shape = nodes[output.id].value.shape();
        if out_shape != (1, 1) {
            return Err(TensorError::NonScalarOutput {
                rows: out_shape.0,
                cols: out_shape.1,
            });
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; output.id + 1];
        grads[output.id] = Some(DenseMatrix::filled(1, 1, 1.0));

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| -> &DenseMatrix { &nodes[i].value };
            let mut acc = |i: usize, contrib: DenseMatrix| {
                if !nodes[i].needs_grad {
                    return;
                }
                match &mut grads[i] {
                    Some(existing) => existing.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if nodes[*a].needs_grad {
                        acc(*a, g.matmul_t(val(*b)));
                    }
                    if nodes[*b].needs_grad {
                        acc(*b, val(*a).tmatmul(&g));
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::AddRow(a, b) => {
                    acc(*b, g.column_sums());
                    acc(*a, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*b, g.scale(-1.0));
                    acc(*a, g.clone());
                }
                Op::Mul(a, b) => {
                    if nodes[*a].needs_grad {
                        acc(*a, g.zip_with("mul", val(*b), |x, y| x * y).expect("shape"));
                    }
                    if nodes[*b].needs_grad {
                        acc(*b, g.zip_with("mul", val(*a), |x, y| x * y).expect("shape"));
                    }
                }
                Op::Scale(a, c) => acc(*a, g.scale(*c)),
                Op::Offset(a) => acc(*a, g.clone()),
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let d = g
                        .zip_with("clamp", val(*a), |gv, x| if x > lo && x < hi { gv } else { 0.0 })
                        .expect("shape");
                    acc(*a, d);
                }
                Op::Relu(a) => {
                    let d = g
                        .zip_with("relu", val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })
                        .expect("shape");
                    acc(*a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g
                        .zip_with("sigmoid", &node.value, |gv, s| gv * s * (1.0 - s))
                        .expect("shape");
                    acc(*a, d);
                }
                Op::Log(a) => {
                    let d = g.zip_with("log", val(*a), |gv, x| gv / x).expect("shape");
                    acc(*a, d);
                }
                Op::Exp(a) => {
                    let d = g.zip_with("exp", &node.value, |gv, y| gv * y).expect("shape");
                    acc(*a, d);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let dots: Vec<f64> = (0..y.rows())
                        .map(|r| g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum())
                        .collect();
                    let d = DenseMatrix::from_fn(y.rows(), y.cols(), |r, c| {
                        y.get(r, c) * (g.get(r, c) - dots[r])
                    });
                    acc(*a, d);
                }
                Op::SumRows(a) => {
                    let (n, _) = val(*a).shape();
                    acc(*a, DenseMatrix::from_fn(n, g.cols(), |_, c| g.get(0, c)));
                }
                Op::MeanRows(a) => {
                    let (n, _) = val(*a).shape();
                    let inv = 1.0 / n as f64;
                    acc(*a, DenseMatrix::from_fn(n, g.cols(), |_, c| g.get(0, c) * inv));
                }
                Op::MaxRows(a, argmax) => {
                    let (n, m) = val(*a).shape();
                    let mut d = DenseMatrix::zeros(n, m);
                    for (c, &r) in argmax.iter().enumerate() {
                        d.set(r, c, g.get(0, c));
                    }
                    acc(*a, d);
                }
                Op::SumAll(a) => {
                    let (n, m) = val(*a).shape();
                    acc(*a, DenseMatrix::filled(n, m, g.scalar()));
                }
                Op::RowSums(a) => {
                    let (n, m) = val(*a).shape();
                    acc(*a, DenseMatrix::from_fn(n, m, |r, _| g.get(r, 0)));
                }
                Op::RowL2Normalize(a, eps) => {
                    let x = val(*a);
                    let y = &node.value;
                    let mut d = DenseMatrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = (x.row(r).iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
                        let gy: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..x.cols() {
                            d.set(r, c, (g.get(r, c) - y.get(r, c) * gy) / norm);
                        }
                    }
                    acc(*a, d);
                }
                Op::FrobeniusSq(a) => acc(*a, val(*a).scale(2.0 * g.scalar())),
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = val(p).rows();
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        acc(p, g.select_rows(&idx));
                        offset += rows;
                    }
                }
                Op::LayerNorm(a, eps) => {
                    let x = val(*a);
                    let y = &node.value;
                    let m = x.cols() as f64;
                    let mut d = DenseMatrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let mean = x.row(r).iter().sum::<f64>() / m;
                        let var = x.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let g_mean = g.row(r).iter().sum::<f64>() / m;
                        let gy_mean =
                            g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum::<f64>() / m;
                        for c in 0..x.cols() {
                            d.set(r, c, inv_std * (g.get(r, c) - g_mean - y.get(r, c) * gy_mean));
                        }
                    }
                    acc(*a, d);
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&DenseMatrix> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of its shape when nothing flowed into it.
    pub fn wrt(&self, v: Var<'_>) -> DenseMatrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<DenseMatrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self) -> f64 {
        self.value().scalar()
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, out, Op::MatMul(self.id, other.id)))
    }

    /// Entrywise sum; a 1×cols right operand is broadcast over rows.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.shape() == b.shape() {
            let out = a.add(&b)?;
            return Ok(self.tape.binary(self.id, other.id, out, Op::Add(self.id, other.id)));
        }
        if b.rows() == 1 && b.cols() == a.cols() {
            let out = DenseMatrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) + b.get(0, c));
            return Ok(self.tape.binary(self.id, other.id, out, Op::AddRow(self.id, other.id)));
        }
        Err(TensorError::dimension("add", a.shape(), b.shape()))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.value().sub(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, out, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let out = self.value().hadamard(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, out, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let out = self.value().scale(c);
        self.tape.unary(self.id, out, Op::Scale(self.id, c))
    }

    /// Adds a constant to every entry.
    pub fn offset(self, c: f64) -> Var<'t> {
        let out = self.value().map(|v| v + c);
        self.tape.unary(self.id, out, Op::Offset(self.id))
    }

    /// Clamps entries into `[lo, hi]`; no gradient flows through clamped entries.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let out = self.value().map(|v| v.clamp(lo, hi));
        self.tape.unary(self.id, out, Op::Clamp(self.id, lo, hi))
    }

    pub fn relu(self) -> Var<'t> {
        let out = self.value().map(|v| v.max(0.0));
        self.tape.unary(self.id, out, Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let out = self.value().map(sigmoid);
        self.tape.unary(self.id, out, Op::Sigmoid(self.id))
    }

    pub fn log(self) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if let Some(index) = a.values().iter().position(|&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain {
                op: "log",
                index,
                value: a.values()[index],
            });
        }
        let out = a.map(f64::ln);
        Ok(self.tape.unary(self.id, out, Op::Log(self.id)))
    }

    pub fn exp(self) -> Var<'t> {
        let out = self.value().map(f64::exp);
        self.tape.unary(self.id, out, Op::Exp(self.id))
    }

    /// Softmax of every row, shifted by the row maximum.
    pub fn row_softmax(self) -> Var<'t> {
        let out = row_softmax(&self.value());
        self.tape.unary(self.id, out, Op::RowSoftmax(self.id))
    }

    /// Column sums, 1×cols.
    pub fn sum_rows(self) -> Var<'t> {
        let out = self.value().column_sums();
        self.tape.unary(self.id, out, Op::SumRows(self.id))
    }

    /// Column means, 1×cols.
    pub fn mean_rows(self) -> Var<'t> {
        let out = self.value().column_means();
        self.tape.unary(self.id, out, Op::MeanRows(self.id))
    }

    /// Column maxima, 1×cols. The first row wins ties.
    pub fn max_rows(self) -> Var<'t> {
        let a = self.value();
        let mut argmax = vec![0usize; a.cols()];
        let mut best = a.row(0).to_vec();
        for r in 1..a.rows() {
            for (c, &v) in a.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let out = DenseMatrix::from_parts(1, a.cols(), best);
        self.tape.unary(self.id, out, Op::MaxRows(self.id, argmax))
    }

    pub fn sum_all(self) -> Var<'t> {
        let out = DenseMatrix::filled(1, 1, self.value().sum());
        self.tape.unary(self.id, out, Op::SumAll(self.id))
    }

    /// Mean over every entry, 1×1.
    pub fn mean_all(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum_all().scale(1.0 / (r * c) as f64)
    }

    /// Per-row sums, rows×1.
    pub fn row_sums(self) -> Var<'t> {
        let a = self.value();
        let out = DenseMatrix::from_fn(a.rows(), 1, |r, _| a.row(r).iter().sum());
        self.tape.unary(self.id, out, Op::RowSums(self.id))
    }

    /// Divides each row by `sqrt(‖row‖² + eps)`.
    pub fn row_l2_normalize(self, eps: f64) -> Var<'t> {
        let a = self.value();
        let mut out = DenseMatrix::zeros(a.rows(), a.cols());
        for r in 0..a.rows() {
            let norm = (a.row(r).iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            for c in 0..a.cols() {
                out.set(r, c, a.get(r, c) / norm);
            }
        }
        self.tape.unary(self.id, out, Op::RowL2Normalize(self.id, eps))
    }

    /// Exact row normalisation; rejects rows with norm below
    /// [`DEGENERATE_ROW_NORM`].
    pub fn row_l2_normalize_strict(self) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        for r in 0..a.rows() {
            let norm = a.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < DEGENERATE_ROW_NORM {
                return Err(TensorError::DegenerateRow { row: r, norm });
            }
        }
        Ok(self.row_l2_normalize(0.0))
    }

    pub fn frobenius_sq(self) -> Var<'t> {
        let out = DenseMatrix::filled(1, 1, self.value().frobenius_sq());
        self.tape.unary(self.id, out, Op::FrobeniusSq(self.id))
    }

    pub fn transpose(self) -> Var<'t> {
        let out = self.value().transpose();
        self.tape.unary(self.id, out, Op::Transpose(self.id))
    }

    /// Per-row standardisation to zero mean and unit variance (no affine part).
    pub fn layer_norm(self, eps: f64) -> Var<'t> {
        let a = self.value();
        let m = a.cols() as f64;
        let mut out = DenseMatrix::zeros(a.rows(), a.cols());
        for r in 0..a.rows() {
            let mean = a.row(r).iter().sum::<f64>() / m;
            let var = a.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let inv_std = 1.0 / (var + eps).sqrt();
            for c in 0..a.cols() {
                out.set(r, c, (a.get(r, c) - mean) * inv_std);
            }
        }
        self.tape.unary(self.id, out, Op::LayerNorm(self.id, eps))
    }
}

/// Stacks rows of several nodes with the same column count.
pub fn concat_rows<'t>(parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let first = parts.first().ok_or(TensorError::EmptyShape { rows: 0, cols: 0 })?;
    let tape = first.tape;
    let values: Vec<Rc<DenseMatrix>> = parts.iter().map(|p| p.value()).collect();
    let refs: Vec<&DenseMatrix> = values.iter().map(|v| v.as_ref()).collect();
    let out = DenseMatrix::vstack(&refs)?;
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let needs = tape.needs(&ids);
    Ok(tape.push(out, Op::ConcatRows(ids), needs))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable row softmax on a plain matrix.
pub fn row_softmax(a: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let row = a.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            out.set(r, c, e / total);
        }
    }
    out
}
