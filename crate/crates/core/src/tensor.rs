//! Dense `f64` tensors and a reverse-mode differentiation tape.
//!
//! A [`Tape`] records every primitive applied during one evaluation. Values
//! live on the tape and are addressed by [`Var`] handles; calling
//! [`Tape::backward`] on a scalar walks the record in reverse and leaves
//! `d output / d node` on every node that depends on a `requires_grad`
//! leaf. Tapes are meant to be built, differentiated once, and dropped.
//!
//! Broadcasting is deliberately narrow: a scalar constant may scale a
//! tensor ([`Tape::scale`]) and a vector may be added to every row of a
//! matrix ([`Tape::add_row_bias`]). Every other shape disagreement is a
//! [`TensorError::ShapeMismatch`].
//!
//! ```
//! use ligas::tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![2.0, 3.0]), true);
//! let a = tape.index(x, 0).unwrap();
//! let b = tape.index(x, 1).unwrap();
//! let y = tape.mul(a, b).unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[3.0, 2.0]);
//! ```

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} cannot hold {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op} expects a {expected}-d tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange { axis: usize, shape: Vec<usize> },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("backward already ran on this tape; call reset_grads first")]
    AlreadyBackpropagated,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Shape-carrying row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::InvalidShape { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor. Panics on a zero-sized dimension.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; n]).expect("zeros: dimensions must be positive")
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// One-dimensional tensor. Panics when `data` is empty.
    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data).expect("vector: data must be non-empty")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    /// Row `i` of a tensor viewed as `[len / cols, cols]`.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        same_shape("zip_with", self, other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.shape.len() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            shape: t.shape.clone(),
        });
    }
    Ok(())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

/// Exact derivative of [`gelu`].
pub fn gelu_derivative(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddRowBias(usize, usize),
    Tanh(usize),
    Gelu(usize),
    Exp(usize),
    Ln(usize),
    Transpose(usize),
    Softmax(usize, usize),
    LogSoftmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        eps: f64,
    },
    GatherRows(usize, Vec<usize>),
    Index(usize, usize),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of primitive operations for one evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backpropagated: bool,
}

// (outer, axis_len, inner) decomposition of a shape around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn softmax_raw(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..n {
                let e = (x[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..n {
                out[at(k)] /= total;
            }
        }
    }
    out
}

// Normalized rows and per-row inverse standard deviation.
fn layer_norm_stats(x: &[f64], cols: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let rows = x.len() / cols;
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for (h, &v) in xhat[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *h = (v - mean) * is;
        }
    }
    (xhat, inv_std)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_rank("matmul", ta, 2)?;
        require_rank("matmul", tb, 2)?;
        let (m, k, k2, n) = (ta.shape[0], ta.shape[1], tb.shape[0], tb.shape[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let data = matmul_raw(&ta.data, &tb.data, m, k, n);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data,
            },
            Op::MatMul(a.0, b.0),
            rg,
        ))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64, node: Op) -> Result<Var> {
        let out = self
            .value(a)
            .zip_with(self.value(b), f)
            .map_err(|_| TensorError::ShapeMismatch {
                op,
                left: self.value(a).shape.clone(),
                right: self.value(b).shape.clone(),
            })?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, node, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(&[a.0]);
        self.push(out, Op::Scale(a.0, c), rg)
    }

    /// `x[i, j] + bias[j]` for a `[m, n]` matrix and a length-`n` bias.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        require_rank("add_row_bias", tx, 2)?;
        let n = tx.shape[1];
        if tb.len() != n || tb.shape.iter().filter(|&&d| d != 1).count() > 1 {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: tx.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let mut data = tx.data.clone();
        for row in data.chunks_mut(n) {
            for (v, &b) in row.iter_mut().zip(&tb.data) {
                *v += b;
            }
        }
        let out = Tensor {
            shape: tx.shape.clone(),
            data,
        };
        let rg = self.rg(&[x.0, bias.0]);
        Ok(self.push(out, Op::AddRowBias(x.0, bias.0), rg))
    }

    fn unary(&mut self, a: Var, f: fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a.0]);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu, Op::Gelu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a.0))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        require_rank("transpose", t, 2)?;
        let (r, c) = (t.shape[0], t.shape[1]);
        let out = Tensor {
            shape: vec![c, r],
            data: transpose_raw(&t.data, r, c),
        };
        let rg = self.rg(&[a.0]);
        Ok(self.push(out, Op::Transpose(a.0), rg))
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.shape.len() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                shape: t.shape.clone(),
            });
        }
        let out = Tensor {
            shape: t.shape.clone(),
            data: softmax_raw(&t.data, &t.shape, axis),
        };
        let rg = self.rg(&[a.0]);
        Ok(self.push(out, Op::Softmax(a.0, axis), rg))
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.cols();
        let mut data = t.data.clone();
        for row in data.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor {
            shape: t.shape.clone(),
            data,
        };
        let rg = self.rg(&[a.0]);
        self.push(out, Op::LogSoftmax(a.0), rg)
    }

    /// Normalizes over the last axis, then applies `gain * xhat + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let n = tx.cols();
        for t in [tg, tb] {
            if t.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: tx.shape.clone(),
                    right: t.shape.clone(),
                });
            }
        }
        let (mut data, _) = layer_norm_stats(&tx.data, n, eps);
        for row in data.chunks_mut(n) {
            for ((v, &g), &b) in row.iter_mut().zip(&tg.data).zip(&tb.data) {
                *v = *v * g + b;
            }
        }
        let out = Tensor {
            shape: tx.shape.clone(),
            data,
        };
        let rg = self.rg(&[x.0, gain.0, bias.0]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                eps,
            },
            rg,
        ))
    }

    /// Selects rows of a `[rows, cols]` table; repeated indices are allowed.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        require_rank("gather_rows", t, 2)?;
        if indices.is_empty() {
            return Err(TensorError::InvalidShape {
                shape: vec![0, t.shape[1]],
                len: 0,
            });
        }
        let (rows, cols) = (t.shape[0], t.shape[1]);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange { index: i, len: rows });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor {
            shape: vec![indices.len(), cols],
            data,
        };
        let rg = self.rg(&[table.0]);
        Ok(self.push(out, Op::GatherRows(table.0, indices.to_vec()), rg))
    }

    /// Row `i` of a matrix as a `[1, cols]` matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        self.gather_rows(a, &[i])
    }

    /// Element at flat index `i` as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let t = self.value(a);
        if i >= t.len() {
            return Err(TensorError::IndexOutOfRange { index: i, len: t.len() });
        }
        let out = Tensor::scalar(t.data[i]);
        let rg = self.rg(&[a.0]);
        Ok(self.push(out, Op::Index(a.0, i), rg))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data.iter().sum());
        let rg = self.rg(&[a.0]);
        self.push(out, Op::Sum(a.0), rg)
    }

    /// Propagates `d output / d node` to every node that needs it.
    ///
    /// Leaves marked `requires_grad` that the output does not depend on get
    /// an all-zero gradient.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.backpropagated {
            return Err(TensorError::AlreadyBackpropagated);
        }
        let out = &self.nodes[output.0].value;
        if !out.is_scalar() {
            return Err(TensorError::NonScalarOutput(out.shape.clone()));
        }
        self.backpropagated = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        self.grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match g {
                Some(data) if n.requires_grad => Some(Tensor {
                    shape: n.value.shape.clone(),
                    data,
                }),
                None if n.requires_grad && matches!(n.op, Op::Leaf) => Some(Tensor::zeros(&n.value.shape)),
                _ => None,
            })
            .collect();
        Ok(())
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backpropagated = false;
    }

    /// Gradient of the last `backward` output with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let val = |i: usize| &self.nodes[i].value;
        let mut acc = |i: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[i].requires_grad {
                return;
            }
            let slot = grads[i].get_or_insert_with(|| vec![0.0; self.nodes[i].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                acc(*a, &mut |ga| {
                    let bt = transpose_raw(&tb.data, k, n);
                    for (d, s) in ga.iter_mut().zip(matmul_raw(g, &bt, m, n, k)) {
                        *d += s;
                    }
                });
                acc(*b, &mut |gb| {
                    let at = transpose_raw(&ta.data, m, k);
                    for (d, s) in gb.iter_mut().zip(matmul_raw(&at, g, k, m, n)) {
                        *d += s;
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, s)| *d += s));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, s)| *d += s));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, s)| *d += s));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((d, s), y) in ga.iter_mut().zip(g).zip(&tb.data) {
                        *d += s * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((d, s), x) in gb.iter_mut().zip(g).zip(&ta.data) {
                        *d += s * x;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, s)| *d += c * s)),
            Op::AddRowBias(x, b) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(d, s)| *d += s));
                acc(*b, &mut |gb| {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = &node.value.data;
                acc(*a, &mut |ga| {
                    for ((d, s), y) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * (1.0 - y * y);
                    }
                });
            }
            Op::Gelu(a) => {
                let x = &val(*a).data;
                acc(*a, &mut |ga| {
                    for ((d, s), &x) in ga.iter_mut().zip(g).zip(x) {
                        *d += s * gelu_derivative(x);
                    }
                });
            }
            Op::Exp(a) => {
                let y = &node.value.data;
                acc(*a, &mut |ga| {
                    for ((d, s), y) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * y;
                    }
                });
            }
            Op::Ln(a) => {
                let x = &val(*a).data;
                acc(*a, &mut |ga| {
                    for ((d, s), x) in ga.iter_mut().zip(g).zip(x) {
                        *d += s / x;
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (val(*a).shape[0], val(*a).shape[1]);
                acc(*a, &mut |ga| {
                    for (d, s) in ga.iter_mut().zip(transpose_raw(g, c, r)) {
                        *d += s;
                    }
                });
            }
            Op::Softmax(a, axis) => {
                let y = &node.value;
                let (outer, n, inner) = axis_split(&y.shape, *axis);
                acc(*a, &mut |ga| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * n + k) * inner + i;
                            let dot: f64 = (0..n).map(|k| g[at(k)] * y.data[at(k)]).sum();
                            for k in 0..n {
                                ga[at(k)] += y.data[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let n = y.cols();
                acc(*a, &mut |ga| {
                    for ((grow, srow), yrow) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.data.chunks(n)) {
                        let total: f64 = srow.iter().sum();
                        for ((d, s), yv) in grow.iter_mut().zip(srow).zip(yrow) {
                            *d += s - yv.exp() * total;
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let tx = val(*x);
                let tg = val(*gain);
                let n = tx.cols();
                let (xhat, inv_std) = layer_norm_stats(&tx.data, n, *eps);
                acc(*x, &mut |gx| {
                    for (r, &is) in inv_std.iter().enumerate() {
                        let span = r * n..(r + 1) * n;
                        let dxhat: Vec<f64> = g[span.clone()].iter().zip(&tg.data).map(|(s, w)| s * w).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx = dxhat.iter().zip(&xhat[span.clone()]).map(|(d, h)| d * h).sum::<f64>() / n as f64;
                        for ((d, dh), h) in gx[span.clone()].iter_mut().zip(&dxhat).zip(&xhat[span]) {
                            *d += is * (dh - mean_d - h * mean_dx);
                        }
                    }
                });
                acc(*gain, &mut |gg| {
                    for (srow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for ((d, s), h) in gg.iter_mut().zip(srow).zip(hrow) {
                            *d += s * h;
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for srow in g.chunks(n) {
                        gb.iter_mut().zip(srow).for_each(|(d, s)| *d += s);
                    }
                });
            }
            Op::GatherRows(t, idx) => {
                let cols = val(*t).shape[1];
                acc(*t, &mut |gt| {
                    for (r, &i) in idx.iter().enumerate() {
                        for (d, s) in gt[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                        {
                            *d += s;
                        }
                    }
                });
            }
            Op::Index(a, i) => acc(*a, &mut |ga| ga[*i] += g[0]),
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|d| *d += g[0])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn tensor_shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(TensorError::InvalidShape { .. })
        ));
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut tape = Tape::new();
        let eye = tape.constant(m(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]));
        let a = m(&[&[1.5, -2.0], &[0.0, 4.0], &[7.0, 1.0]]);
        let av = tape.constant(a.clone());
        let p = tape.matmul(eye, av).unwrap();
        assert_eq!(tape.value(p), &a);

        let x = tape.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let ones = tape.constant(m(&[&[1.0], &[1.0]]));
        let y = tape.matmul(x, ones).unwrap();
        assert_eq!(tape.value(y), &m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn matmul_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3] vs [2, 3]"));
    }

    #[test]
    fn add_zero_is_identity_and_shapes_checked() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 3.5]));
        let z = tape.constant(Tensor::zeros(&[3]));
        let y = tape.add(x, z).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        let w = tape.constant(Tensor::zeros(&[4]));
        assert!(tape.add(x, w).is_err());
        let r = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(tape.mul(x, r).is_err());
    }

    #[test]
    fn tanh_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0), true);
        let y = tape.tanh(x);
        assert_eq!(tape.value(y).data(), &[0.0]);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = tape.softmax(a, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        let b = tape.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let s = tape.softmax(b, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        assert!(tape.softmax(b, 1).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one_along_each_axis() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[0.3, -0.2, 1.1], &[5.0, -3.0, 0.0]]));
        for axis in 0..2 {
            let s = tape.softmax(x, axis).unwrap();
            let v = tape.value(s);
            let (outer, n, inner) = axis_split(v.shape(), axis);
            for o in 0..outer {
                for i in 0..inner {
                    let total: f64 = (0..n).map(|k| v.data()[(o * n + k) * inner + i]).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
            assert!(v.data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[3.0, 3.0, 3.0, 3.0]]));
        let g = tape.constant(Tensor::vector(vec![1.0; 4]));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[1.0, 2.0, 7.0, -4.0], &[0.1, 0.2, 0.3, 0.5]]));
        let g = tape.constant(Tensor::vector(vec![1.0; 4]));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
        for r in 0..2 {
            let row = tape.value(y).row(r);
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_and_product_gradients() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::vector(vec![2.0, -1.0]));
        let x = tape.leaf(Tensor::vector(vec![5.0, 3.0]), true);
        let wx = tape.mul(w, x).unwrap();
        let f = tape.sum(wx);
        tape.backward(f).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -1.0]);
        assert!(tape.grad(w).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar_and_repeat() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = tape.tanh(x);
        assert!(matches!(tape.backward(y), Err(TensorError::NonScalarOutput(_))));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s), Err(TensorError::AlreadyBackpropagated));
        tape.reset_grads();
        assert!(tape.backward(s).is_ok());
    }

    #[test]
    fn disconnected_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let unused = tape.leaf(Tensor::zeros(&[2, 2]), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(unused).unwrap(), &Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn gather_rows_scatters_gradient() {
        let mut tape = Tape::new();
        let table = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]), true);
        let g = tape.gather_rows(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(g), &m(&[&[5.0, 6.0], &[1.0, 2.0], &[5.0, 6.0]]));
        let s = tape.sum(g);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(table).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(matches!(
            tape.gather_rows(table, &[3]),
            Err(TensorError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn row_bias_broadcast_only() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0]]), true);
        let b = tape.leaf(Tensor::vector(vec![10.0, 20.0]), true);
        let y = tape.add_row_bias(x, b).unwrap();
        assert_eq!(tape.value(y), &m(&[&[11.0, 22.0], &[13.0, 24.0]]));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(b).unwrap().data(), &[2.0, 2.0]);
        let bad = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(tape.add_row_bias(x, bad).is_err());
    }

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        // Tanh-approximation GELU(1) reference.
        assert!((gelu(1.0) - 0.841_191_990_608_276_8).abs() < 1e-12);
        assert!((gelu_derivative(0.0) - 0.5).abs() < 1e-15);
    }
}
