//! Dense row-major tensors and a tape for reverse-mode differentiation.
//!
//! Every primitive works on rank-2 tensors (`rows x cols`); scalars are
//! `1 x 1`. Values flow through a [`Tape`], which records each primitive as it
//! is applied. [`Tape::backward`] consumes the tape and returns the gradient of
//! a scalar loss with respect to every leaf that was registered with
//! `requires_grad`.
//!
//! ```
//! use roadsense_core::tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::matrix(1, 1, vec![3.0]).unwrap().with_grad(true));
//! let sq = tape.square(x);
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[6.0]);
//! ```

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: alloc::string::String },
    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),
    #[error("loss must be a 1x1 tensor, got {0}x{1}")]
    NotScalarLoss(usize, usize),
    #[error("variable {0} does not belong to this tape")]
    DetachedTensor(usize),
}

fn mismatch(op: &'static str, detail: alloc::string::String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

/// A dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default)]
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(mismatch(
                "Tensor::new",
                alloc::format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Self { shape, data, requires_grad: false })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { shape: vec![rows, cols], data: vec![0.0; rows * cols], requires_grad: false }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self { shape: vec![rows, cols], data: vec![value; rows * cols], requires_grad: false }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1, 1], data: vec![value], requires_grad: false }
    }

    /// A `1 x n` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { shape: vec![1, n], data: values, requires_grad: false }
    }

    /// An `n x 1` column vector.
    pub fn column(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { shape: vec![n, 1], data: values, requires_grad: false }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn with_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
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

    /// `(rows, cols)`; rank-1 tensors are read as a single row.
    pub fn dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            [r, rest @ ..] => (*r, rest.iter().product()),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims().0
    }

    pub fn cols(&self) -> usize {
        self.dims().1
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    ScaleRows(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Square(Var),
    MulScalar(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    LayerNorm { x: Var, inv_std: Vec<f64> },
    SegmentSoftmax { x: Var, segments: Vec<usize> },
    GatherRows { x: Var, index: Vec<usize> },
    ScatterAddRows { x: Var, index: Vec<usize> },
    MeanRows(Var),
    MaxRows { x: Var, argmax: Vec<usize> },
    Sum(Var),
    Mean(Var),
    L2Normalize { x: Var, norm: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive applications. Inputs always precede outputs.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records an input. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad;
        self.push(t, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_grad(false), Op::Leaf, false)
    }

    fn push(&mut self, mut value: Tensor, op: Op, needs_grad: bool) -> Var {
        if value.shape.len() != 2 {
            let (r, c) = value.dims();
            value.shape = vec![r, c];
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(mismatch("matmul", alloc::format!("{n}x{k} * {k2}x{m}")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if !self.value(a).same_dims(self.value(b)) {
            return Err(mismatch(
                "add",
                alloc::format!("{:?} + {:?}", self.dims(a), self.dims(b)),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let (r, c) = self.dims(a);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Add(a, b), needs))
    }

    /// `a [n x m] + row [1 x m]`, broadcasting the row (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (n, m) = self.dims(a);
        if self.dims(row) != (1, m) {
            return Err(mismatch("add_row", alloc::format!("{n}x{m} + {:?}", self.dims(row))));
        }
        let rv = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(m.max(1)) {
            for (o, b) in chunk.iter_mut().zip(rv) {
                *o += b;
            }
        }
        let needs = self.needs(&[a, row]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::AddRow(a, row), needs))
    }

    /// `a [n x m] * row [1 x m]` elementwise per row (gain).
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (n, m) = self.dims(a);
        if self.dims(row) != (1, m) {
            return Err(mismatch("mul_row", alloc::format!("{n}x{m} * {:?}", self.dims(row))));
        }
        let rv = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(m.max(1)) {
            for (o, g) in chunk.iter_mut().zip(rv) {
                *o *= g;
            }
        }
        let needs = self.needs(&[a, row]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MulRow(a, row), needs))
    }

    /// `a [n x m]` with row `i` multiplied by `s[i]`, `s` being `n x 1`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let (n, m) = self.dims(a);
        if self.dims(s) != (n, 1) {
            return Err(mismatch("scale_rows", alloc::format!("{n}x{m} by {:?}", self.dims(s))));
        }
        let sv = self.value(s).data();
        let mut out = self.value(a).data().to_vec();
        if m > 0 {
            for (chunk, f) in out.chunks_mut(m).zip(sv) {
                for o in chunk.iter_mut() {
                    *o *= f;
                }
            }
        }
        let needs = self.needs(&[a, s]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::ScaleRows(a, s), needs))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).data().iter().map(|&x| f(x)).collect();
        let needs = self.needs(&[a]);
        self.push(Tensor { shape: vec![r, c], data: out, requires_grad: false }, op, needs)
    }

    /// ReLU; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), math::sigmoid)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::MulScalar(a, c), |x| c * x)
    }

    /// Concatenates along `axis` (0 = stack rows, 1 = join columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        if inputs.is_empty() || axis > 1 {
            return Err(mismatch("concat", alloc::format!("{} inputs, axis {axis}", inputs.len())));
        }
        let dims: Vec<(usize, usize)> = inputs.iter().map(|&v| self.dims(v)).collect();
        let (out_r, out_c, data) = if axis == 0 {
            let c = dims[0].1;
            if dims.iter().any(|d| d.1 != c) {
                return Err(mismatch("concat", alloc::format!("row concat of {dims:?}")));
            }
            let mut data = Vec::new();
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            (dims.iter().map(|d| d.0).sum(), c, data)
        } else {
            let r = dims[0].0;
            if dims.iter().any(|d| d.0 != r) {
                return Err(mismatch("concat", alloc::format!("column concat of {dims:?}")));
            }
            let total: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row_slice(i));
                }
            }
            (r, total, data)
        };
        let needs = self.needs(inputs);
        Ok(self.push(
            Tensor::matrix(out_r, out_c, data)?,
            Op::Concat { inputs: inputs.to_vec(), axis },
            needs,
        ))
    }

    /// Normalizes each row to zero mean and unit (biased) variance. No affine
    /// part; compose with [`Tape::mul_row`] and [`Tape::add_row`].
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, m) = self.dims(x);
        let xv = self.value(x).data();
        let mut out = vec![0.0; n * m];
        let mut inv_std = vec![0.0; n];
        if m > 0 {
            for i in 0..n {
                let row = &xv[i * m..(i + 1) * m];
                let mean = row.iter().sum::<f64>() / m as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                let is = 1.0 / math::sqrt(var + eps);
                inv_std[i] = is;
                for j in 0..m {
                    out[i * m + j] = (row[j] - mean) * is;
                }
            }
        }
        let needs = self.needs(&[x]);
        self.push(
            Tensor { shape: vec![n, m], data: out, requires_grad: false },
            Op::LayerNorm { x, inv_std },
            needs,
        )
    }

    /// Softmax of an `n x 1` column computed independently within each
    /// segment; `segments[i]` names the segment of entry `i`.
    pub fn segment_softmax(&mut self, x: Var, segments: &[usize]) -> Result<Var, TensorError> {
        let (n, c) = self.dims(x);
        if c != 1 || segments.len() != n {
            return Err(mismatch(
                "segment_softmax",
                alloc::format!("{n}x{c} values with {} segment ids", segments.len()),
            ));
        }
        let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let xv = self.value(x).data();
        let mut seg_max = vec![f64::NEG_INFINITY; n_seg];
        for (v, &s) in xv.iter().zip(segments) {
            if *v > seg_max[s] {
                seg_max[s] = *v;
            }
        }
        let mut out: Vec<f64> = xv.iter().zip(segments).map(|(v, &s)| math::exp(v - seg_max[s])).collect();
        let mut seg_sum = vec![0.0; n_seg];
        for (o, &s) in out.iter().zip(segments) {
            seg_sum[s] += o;
        }
        for (o, &s) in out.iter_mut().zip(segments) {
            *o /= seg_sum[s];
        }
        let needs = self.needs(&[x]);
        Ok(self.push(
            Tensor::column(out),
            Op::SegmentSoftmax { x, segments: segments.to_vec() },
            needs,
        ))
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, TensorError> {
        let (n, m) = self.dims(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(mismatch("gather_rows", alloc::format!("row {bad} of {n}")));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(index.len() * m);
        for &i in index {
            out.extend_from_slice(xv.row_slice(i));
        }
        let needs = self.needs(&[x]);
        Ok(self.push(
            Tensor::matrix(index.len(), m, out)?,
            Op::GatherRows { x, index: index.to_vec() },
            needs,
        ))
    }

    /// Sums row `i` of `x` into output row `index[i]`; output has `n_out` rows.
    pub fn scatter_add_rows(&mut self, x: Var, index: &[usize], n_out: usize) -> Result<Var, TensorError> {
        let (n, m) = self.dims(x);
        if index.len() != n {
            return Err(mismatch("scatter_add_rows", alloc::format!("{n} rows, {} targets", index.len())));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n_out) {
            return Err(mismatch("scatter_add_rows", alloc::format!("target {bad} of {n_out}")));
        }
        let xv = self.value(x).data();
        let mut out = vec![0.0; n_out * m];
        for (i, &t) in index.iter().enumerate() {
            for j in 0..m {
                out[t * m + j] += xv[i * m + j];
            }
        }
        let needs = self.needs(&[x]);
        Ok(self.push(
            Tensor::matrix(n_out, m, out)?,
            Op::ScatterAddRows { x, index: index.to_vec() },
            needs,
        ))
    }

    /// Column means, `1 x m`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (n, m) = self.dims(x);
        if n == 0 {
            return Err(mismatch("mean_rows", "no rows".into()));
        }
        let xv = self.value(x).data();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                out[j] += xv[i * m + j];
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::row(out), Op::MeanRows(x), needs))
    }

    /// Column maxima, `1 x m`. The gradient goes to the first maximal row.
    pub fn max_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (n, m) = self.dims(x);
        if n == 0 {
            return Err(mismatch("max_rows", "no rows".into()));
        }
        let xv = self.value(x).data();
        let mut out = xv[..m].to_vec();
        let mut argmax = vec![0; m];
        for i in 1..n {
            for j in 0..m {
                if xv[i * m + j] > out[j] {
                    out[j] = xv[i * m + j];
                    argmax[j] = i;
                }
            }
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::row(out), Op::MaxRows { x, argmax }, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(mismatch("mean", "empty tensor".into()));
        }
        let s = self.value(x).data().iter().sum::<f64>() / n as f64;
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Mean(x), needs))
    }

    /// `x / ||x||` over all entries; the zero tensor maps to zero.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let xv = self.value(x).data();
        let norm = math::sqrt(xv.iter().map(|v| v * v).sum());
        let out = if norm > 0.0 { xv.iter().map(|v| v / norm).collect() } else { vec![0.0; xv.len()] };
        let needs = self.needs(&[x]);
        self.push(
            Tensor { shape: vec![r, c], data: out, requires_grad: false },
            Op::L2Normalize { x, norm },
            needs,
        )
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(TensorError::DetachedTensor(loss.0));
        };
        let (r, c) = node.value.dims();
        if (r, c) != (1, 1) {
            return Err(TensorError::NotScalarLoss(r, c));
        }
        if !node.value.all_finite() {
            return Err(TensorError::NonFiniteValue("loss"));
        }

        let shapes: Vec<(usize, usize)> = self.nodes.iter().map(|n| n.value.dims()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match (g, &node.op) {
                    (Some(g), Op::Leaf) if node.needs_grad => {
                        let (r, c) = shapes[i];
                        Some(Tensor { shape: vec![r, c], data: g, requires_grad: false })
                    }
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let (n, m) = node.value.dims();
        let accumulate = |grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        let wants = |v: Var| self.nodes[v.0].needs_grad;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (_, k) = self.dims(*a);
                if wants(*a) {
                    let bt = transpose(self.value(*b).data(), k, m);
                    accumulate(grads, *a, matmul_raw(g, &bt, n, m, k));
                }
                if wants(*b) {
                    let at = transpose(self.value(*a).data(), n, k);
                    accumulate(grads, *b, matmul_raw(&at, g, k, n, m));
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, g.to_vec());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.to_vec());
                if wants(*row) {
                    accumulate(grads, *row, column_sums(g, n, m));
                }
            }
            Op::MulRow(a, row) => {
                let rv = self.value(*row).data();
                let av = self.value(*a).data();
                if wants(*a) {
                    let d = g.iter().enumerate().map(|(i, gi)| gi * rv[i % m]).collect();
                    accumulate(grads, *a, d);
                }
                if wants(*row) {
                    let mut d = vec![0.0; m];
                    for (i, gi) in g.iter().enumerate() {
                        d[i % m] += gi * av[i];
                    }
                    accumulate(grads, *row, d);
                }
            }
            Op::ScaleRows(a, s) => {
                let sv = self.value(*s).data();
                let av = self.value(*a).data();
                if wants(*a) {
                    let d = g.iter().enumerate().map(|(i, gi)| gi * sv[i / m]).collect();
                    accumulate(grads, *a, d);
                }
                if wants(*s) {
                    let mut d = vec![0.0; n];
                    for (i, gi) in g.iter().enumerate() {
                        d[i / m] += gi * av[i];
                    }
                    accumulate(grads, *s, d);
                }
            }
            Op::Relu(a) => {
                let d = g.iter().zip(out).map(|(gi, o)| if *o > 0.0 { *gi } else { 0.0 }).collect();
                accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a).data();
                let d = g
                    .iter()
                    .zip(av)
                    .map(|(gi, x)| if *x > 0.0 { *gi } else { slope * gi })
                    .collect();
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.iter().zip(out).map(|(gi, y)| gi * y * (1.0 - y)).collect();
                accumulate(grads, *a, d);
            }
            Op::Square(a) => {
                let av = self.value(*a).data();
                let d = g.iter().zip(av).map(|(gi, x)| 2.0 * x * gi).collect();
                accumulate(grads, *a, d);
            }
            Op::MulScalar(a, c) => {
                accumulate(grads, *a, g.iter().map(|gi| c * gi).collect());
            }
            Op::Concat { inputs, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &v in inputs {
                        let len = self.value(v).len();
                        accumulate(grads, v, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                } else {
                    let mut col = 0;
                    for &v in inputs {
                        let w = self.dims(v).1;
                        if wants(v) {
                            let mut d = Vec::with_capacity(n * w);
                            for i in 0..n {
                                d.extend_from_slice(&g[i * m + col..i * m + col + w]);
                            }
                            accumulate(grads, v, d);
                        }
                        col += w;
                    }
                }
            }
            Op::LayerNorm { x, inv_std } => {
                let mut d = vec![0.0; n * m];
                for i in 0..n {
                    let gy = &g[i * m..(i + 1) * m];
                    let y = &out[i * m..(i + 1) * m];
                    let mean_g = gy.iter().sum::<f64>() / m as f64;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                    for j in 0..m {
                        d[i * m + j] = inv_std[i] * (gy[j] - mean_g - y[j] * mean_gy);
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::SegmentSoftmax { x, segments } => {
                let n_seg = segments.iter().copied().max().map_or(0, |v| v + 1);
                let mut dot = vec![0.0; n_seg];
                for ((gi, y), &s) in g.iter().zip(out).zip(segments) {
                    dot[s] += gi * y;
                }
                let d = g
                    .iter()
                    .zip(out)
                    .zip(segments)
                    .map(|((gi, y), &s)| y * (gi - dot[s]))
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::GatherRows { x, index } => {
                let (src_n, _) = self.dims(*x);
                let mut d = vec![0.0; src_n * m];
                for (i, &src) in index.iter().enumerate() {
                    for j in 0..m {
                        d[src * m + j] += g[i * m + j];
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::ScatterAddRows { x, index } => {
                let mut d = Vec::with_capacity(index.len() * m);
                for &t in index {
                    d.extend_from_slice(&g[t * m..(t + 1) * m]);
                }
                accumulate(grads, *x, d);
            }
            Op::MeanRows(x) => {
                let (rows, _) = self.dims(*x);
                let mut d = Vec::with_capacity(rows * m);
                for _ in 0..rows {
                    d.extend(g.iter().map(|gi| gi / rows as f64));
                }
                accumulate(grads, *x, d);
            }
            Op::MaxRows { x, argmax } => {
                let (rows, _) = self.dims(*x);
                let mut d = vec![0.0; rows * m];
                for (j, &i) in argmax.iter().enumerate() {
                    d[i * m + j] += g[j];
                }
                accumulate(grads, *x, d);
            }
            Op::Sum(x) => {
                let len = self.value(*x).len();
                accumulate(grads, *x, vec![g[0]; len]);
            }
            Op::Mean(x) => {
                let len = self.value(*x).len();
                accumulate(grads, *x, vec![g[0] / len as f64; len]);
            }
            Op::L2Normalize { x, norm } => {
                if *norm == 0.0 {
                    return;
                }
                let dot: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                let d = g.iter().zip(out).map(|(gi, y)| (gi - y * dot) / norm).collect();
                accumulate(grads, *x, d);
            }
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    if m == 0 {
        return out;
    }
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a[i * m + j];
        }
    }
    out
}

fn column_sums(g: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            out[j] += g[i * m + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_by_identity_is_identity() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(2));
        let m = tape.constant(t(2, 2, &[1.5, -2.0, 0.25, 7.0]));
        let out = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.5, -2.0, 0.25, 7.0]);
    }

    #[test]
    fn matmul_rejects_bad_inner_dim() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(t(1, 4, &[3.0, 3.0, 3.0, 3.0]));
        let y = tape.layer_norm(x, 1e-5);
        assert!(tape.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_entry_softmax_is_one() {
        let mut tape = Tape::new();
        let x = tape.constant(t(1, 1, &[-42.0]));
        let y = tape.segment_softmax(x, &[0]).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0]);
    }

    #[test]
    fn segments_normalize_independently() {
        let mut tape = Tape::new();
        let x = tape.constant(t(5, 1, &[0.3, 2.0, -1.0, 4.0, 4.0]));
        let y = tape.segment_softmax(x, &[0, 0, 1, 1, 1]).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] + v[1] - 1.0).abs() < 1e-15);
        assert!((v[2] + v[3] + v[4] - 1.0).abs() < 1e-15);
        assert_eq!(v[3], v[4]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 1, &[3.0]).with_grad(true));
        let sq = tape.square(x);
        let loss = tape.sum(sq);
        assert_eq!(tape.backward(loss).unwrap().wrt(x).data(), &[6.0]);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 2, &[1.0, 2.0]).with_grad(true));
        let p = tape.leaf(t(2, 2, &[1.0, 2.0, 3.0, 4.0]).with_grad(true));
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(p).is_none());
        assert_eq!(grads.wrt(p).data(), &[0.0; 4]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 2, &[1.0, 2.0]).with_grad(true));
        assert_eq!(tape.backward(x).unwrap_err(), TensorError::NotScalarLoss(1, 2));
    }

    #[test]
    fn backward_rejects_foreign_var() {
        let mut other = Tape::new();
        for _ in 0..3 {
            other.constant(Tensor::scalar(1.0));
        }
        let foreign = Var(2);
        let tape = Tape::new();
        assert_eq!(tape.backward(foreign).unwrap_err(), TensorError::DetachedTensor(2));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 1, &[f64::NAN]).with_grad(true));
        let loss = tape.sum(x);
        assert_eq!(tape.backward(loss).unwrap_err(), TensorError::NonFiniteValue("loss"));
    }

    #[test]
    fn gradients_sum_over_paths() {
        // loss = sum(x) + sum(x*2) -> grad 3
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 3, &[1.0, -1.0, 5.0]).with_grad(true));
        let a = tape.sum(x);
        let x2 = tape.mul_scalar(x, 2.0);
        let b = tape.sum(x2);
        let loss = tape.add(a, b).unwrap();
        assert_eq!(tape.backward(loss).unwrap().wrt(x).data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 3, &[-1.0, 0.0, 2.0]).with_grad(true));
        let y = tape.relu(x);
        let loss = tape.sum(y);
        assert_eq!(tape.backward(loss).unwrap().wrt(x).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn inputs_are_not_mutated() {
        let before = t(2, 2, &[1.0, -2.0, 3.0, -4.0]);
        let mut tape = Tape::new();
        let x = tape.leaf(before.clone().with_grad(true));
        let r = tape.relu(x);
        let s = tape.mul_scalar(r, 3.0);
        let _ = tape.layer_norm(s, 1e-5);
        assert_eq!(tape.value(x).data(), before.data());
    }
}
