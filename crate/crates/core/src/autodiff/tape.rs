use std::sync::Arc;

use crate::{Error, Result};

/// Batch-norm variance epsilon.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// A dense matrix value, optionally tied to a tape node.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub id: Option<TensorId>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "tensor shape {}x{} does not fit {} values",
                rows,
                cols,
                data.len()
            )));
        }
        Ok(Tensor {
            rows,
            cols,
            data,
            id: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            id: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
            id: None,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Recorded operation. Index vectors are shared so cloning a node is cheap and
/// the backward op reuses the exact forward selection.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    AddScalar(TensorId, f64),
    MulConst(TensorId, Arc<Vec<f64>>),
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    LeakyRelu(TensorId, f64),
    Sigmoid(TensorId),
    Exp(TensorId),
    Ln(TensorId),
    Sqrt(TensorId),
    Recip(TensorId),
    SumRows(TensorId),
    SumCols(TensorId),
    SumAll(TensorId),
    MeanRows(TensorId),
    BroadcastRow(TensorId, usize),
    BroadcastCol(TensorId, usize),
    BroadcastScalar(TensorId, usize, usize),
    /// Max over each block of `block` consecutive rows; `argmax` stores the
    /// winning absolute row per (block, column).
    SegmentMaxRows {
        x: TensorId,
        block: usize,
        argmax: Arc<Vec<usize>>,
    },
    /// out[i, c] = x[argmax[i * cols + c], c]
    GatherEntries {
        x: TensorId,
        argmax: Arc<Vec<usize>>,
    },
    /// out[argmax[i * cols + c], c] += x[i, c]; targets are collision-free per
    /// column because argmax rows come from disjoint blocks.
    ScatterEntries {
        x: TensorId,
        rows_out: usize,
        argmax: Arc<Vec<usize>>,
    },
    ConcatCols(TensorId, TensorId),
    SliceCols {
        x: TensorId,
        from: usize,
        to: usize,
    },
    PadCols {
        x: TensorId,
        from: usize,
        total: usize,
    },
    GatherRows {
        x: TensorId,
        idx: Arc<Vec<usize>>,
    },
    ScatterAddRows {
        x: TensorId,
        rows_out: usize,
        idx: Arc<Vec<usize>>,
    },
    Reshape(TensorId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MulConst(..) => "mul_const",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sqrt(..) => "sqrt",
            Op::Recip(..) => "recip",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::SumAll(..) => "sum_all",
            Op::MeanRows(..) => "mean_rows",
            Op::BroadcastRow(..) => "broadcast_row",
            Op::BroadcastCol(..) => "broadcast_col",
            Op::BroadcastScalar(..) => "broadcast_scalar",
            Op::SegmentMaxRows { .. } => "segment_max_rows",
            Op::GatherEntries { .. } => "gather_entries",
            Op::ScatterEntries { .. } => "scatter_entries",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::GatherRows { .. } => "gather_rows",
            Op::ScatterAddRows { .. } => "scatter_add_rows",
            Op::Reshape(..) => "reshape",
        }
    }

    fn inputs(&self) -> Vec<TensorId> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::ConcatCols(a, b) => {
                vec![a, b]
            }
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::MulConst(a, _)
            | Op::Transpose(a)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::SumAll(a)
            | Op::MeanRows(a)
            | Op::BroadcastRow(a, _)
            | Op::BroadcastCol(a, _)
            | Op::BroadcastScalar(a, _, _)
            | Op::SegmentMaxRows { x: a, .. }
            | Op::GatherEntries { x: a, .. }
            | Op::ScatterEntries { x: a, .. }
            | Op::SliceCols { x: a, .. }
            | Op::PadCols { x: a, .. }
            | Op::GatherRows { x: a, .. }
            | Op::ScatterAddRows { x: a, .. }
            | Op::Reshape(a) => vec![a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// Append-only computation tape. Nodes are in topological order by
/// construction; `backward` appends its own nodes, which lets gradients be
/// differentiated again.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    strict: bool,
}

/// Sum in a canonical order so the result is invariant to input permutation.
fn sorted_sum(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().sum()
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let cr = &mut c[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in cr.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
    c
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            strict: cfg!(debug_assertions),
        }
    }

    /// Toggle eager non-finite detection (defaults to on in debug builds).
    pub fn set_strict(&mut self, on: bool) {
        self.strict = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all nodes at position `mark` and later.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: TensorId) -> f64 {
        self.nodes[id.0].value[0]
    }

    pub fn tensor(&self, id: TensorId) -> Tensor {
        let n = &self.nodes[id.0];
        Tensor {
            rows: n.rows,
            cols: n.cols,
            data: n.value.clone(),
            id: Some(id),
        }
    }

    fn check_id(&self, id: TensorId, what: &'static str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::invalid(format!(
                "{}: tensor {} is not on this tape (len {})",
                what,
                id.0,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Result<TensorId> {
        debug_assert_eq!(value.len(), rows * cols);
        if self.strict {
            if let Some(bad) = value.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite value {} produced by op '{}'",
                    bad,
                    op.name()
                )));
            }
        }
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
        });
        Ok(id)
    }

    fn mismatch(&self, op: &'static str, ids: &[TensorId]) -> Error {
        let shapes: Vec<String> = ids
            .iter()
            .map(|&i| {
                let (r, c) = self.shape(i);
                format!("{}x{}", r, c)
            })
            .collect();
        Error::ShapeMismatch {
            op,
            detail: shapes.join(" vs "),
        }
    }

    // ---- leaves ----

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<TensorId> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "leaf shape {}x{} does not fit {} values",
                rows,
                cols,
                data.len()
            )));
        }
        self.push(Op::Leaf, rows, cols, data)
    }

    pub fn leaf_tensor(&mut self, t: &Tensor) -> Result<TensorId> {
        self.leaf(t.rows, t.cols, t.data.clone())
    }

    pub fn scalar(&mut self, v: f64) -> Result<TensorId> {
        self.leaf(1, 1, vec![v])
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Result<TensorId> {
        self.leaf(rows, cols, vec![0.0; rows * cols])
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if self.shape(b) != (r, c) {
            return Err(self.mismatch("add", &[a, b]));
        }
        let v = self.zip(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), r, c, v)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if self.shape(b) != (r, c) {
            return Err(self.mismatch("sub", &[a, b]));
        }
        let v = self.zip(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), r, c, v)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if self.shape(b) != (r, c) {
            return Err(self.mismatch("mul", &[a, b]));
        }
        let v = self.zip(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), r, c, v)
    }

    fn zip(&self, a: TensorId, b: TensorId, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    fn map(&self, a: TensorId, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes[a.0].value.iter().map(|&x| f(x)).collect()
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let (r, co) = self.shape(a);
        let v = self.map(a, |x| x * c);
        self.push(Op::Scale(a, c), r, co, v)
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let (r, co) = self.shape(a);
        let v = self.map(a, |x| x + c);
        self.push(Op::AddScalar(a, c), r, co, v)
    }

    fn mul_const(&mut self, a: TensorId, k: Arc<Vec<f64>>) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if k.len() != r * c {
            return Err(self.mismatch("mul_const", &[a]));
        }
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(k.iter())
            .map(|(&x, &m)| x * m)
            .collect();
        self.push(Op::MulConst(a, k), r, c, v)
    }

    pub fn leaky_relu(&mut self, a: TensorId, alpha: f64) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let v = self.map(a, |x| if x > 0.0 { x } else { alpha * x });
        self.push(Op::LeakyRelu(a, alpha), r, c, v)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let v = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), r, c, v)
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let v = self.map(a, f64::exp);
        self.push(Op::Exp(a), r, c, v)
    }

    pub fn ln(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let v = self.map(a, f64::ln);
        self.push(Op::Ln(a), r, c, v)
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let v = self.map(a, f64::sqrt);
        self.push(Op::Sqrt(a), r, c, v)
    }

    pub fn recip(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let v = self.map(a, f64::recip);
        self.push(Op::Recip(a), r, c, v)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(self.mismatch("matmul", &[a, b]));
        }
        let v = matmul_kernel(&self.nodes[a.0].value, &self.nodes[b.0].value, m, k, n);
        self.push(Op::MatMul(a, b), m, n, v)
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let x = &self.nodes[a.0].value;
        let mut v = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                v[j * r + i] = x[i * c + j];
            }
        }
        self.push(Op::Transpose(a), c, r, v)
    }

    // ---- reductions (canonical summation order) ----

    pub fn sum_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let x = &self.nodes[a.0].value;
        let mut out = vec![0.0; c];
        let mut buf = vec![0.0; r];
        for j in 0..c {
            for i in 0..r {
                buf[i] = x[i * c + j];
            }
            out[j] = sorted_sum(&mut buf);
        }
        self.push(Op::SumRows(a), 1, c, out)
    }

    pub fn sum_cols(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let x = &self.nodes[a.0].value;
        let mut out = vec![0.0; r];
        let mut buf = vec![0.0; c];
        for i in 0..r {
            buf.copy_from_slice(&x[i * c..(i + 1) * c]);
            out[i] = sorted_sum(&mut buf);
        }
        self.push(Op::SumCols(a), r, 1, out)
    }

    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let mut buf = self.nodes[a.0].value.clone();
        let s = sorted_sum(&mut buf);
        self.push(Op::SumAll(a), 1, 1, vec![s])
    }

    pub fn mean_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let x = &self.nodes[a.0].value;
        let mut out = vec![0.0; c];
        let mut buf = vec![0.0; r];
        for j in 0..c {
            for i in 0..r {
                buf[i] = x[i * c + j];
            }
            out[j] = sorted_sum(&mut buf) / r as f64;
        }
        self.push(Op::MeanRows(a), 1, c, out)
    }

    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / (r * c) as f64)
    }

    // ---- broadcasts ----

    pub fn broadcast_row(&mut self, a: TensorId, rows: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if r != 1 {
            return Err(self.mismatch("broadcast_row", &[a]));
        }
        let x = &self.nodes[a.0].value;
        let mut v = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            v.extend_from_slice(x);
        }
        self.push(Op::BroadcastRow(a, rows), rows, c, v)
    }

    pub fn broadcast_col(&mut self, a: TensorId, cols: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if c != 1 {
            return Err(self.mismatch("broadcast_col", &[a]));
        }
        let x = &self.nodes[a.0].value;
        let mut v = Vec::with_capacity(r * cols);
        for i in 0..r {
            for _ in 0..cols {
                v.push(x[i]);
            }
        }
        self.push(Op::BroadcastCol(a, cols), r, cols, v)
    }

    pub fn broadcast_scalar(&mut self, a: TensorId, rows: usize, cols: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if (r, c) != (1, 1) {
            return Err(self.mismatch("broadcast_scalar", &[a]));
        }
        let v = vec![self.nodes[a.0].value[0]; rows * cols];
        self.push(Op::BroadcastScalar(a, rows, cols), rows, cols, v)
    }

    // ---- max pooling ----

    /// Max over every block of `block` consecutive rows. Ties go to the lowest
    /// row index. `block` must divide the row count.
    pub fn segment_max_rows(&mut self, a: TensorId, block: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if block == 0 || r % block != 0 {
            return Err(self.mismatch("segment_max_rows", &[a]));
        }
        let x = &self.nodes[a.0].value;
        let out_rows = r / block;
        let mut v = vec![0.0; out_rows * c];
        let mut argmax = vec![0usize; out_rows * c];
        for b in 0..out_rows {
            for j in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_row = b * block;
                for i in b * block..(b + 1) * block {
                    let val = x[i * c + j];
                    if val > best {
                        best = val;
                        best_row = i;
                    }
                }
                v[b * c + j] = best;
                argmax[b * c + j] = best_row;
            }
        }
        self.push(
            Op::SegmentMaxRows {
                x: a,
                block,
                argmax: Arc::new(argmax),
            },
            out_rows,
            c,
            v,
        )
    }

    /// Column-wise max over all rows (pooling over points).
    pub fn max_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, _) = self.shape(a);
        self.segment_max_rows(a, r)
    }

    fn gather_entries(&mut self, a: TensorId, argmax: Arc<Vec<usize>>) -> Result<TensorId> {
        let (_, c) = self.shape(a);
        let out_rows = argmax.len() / c;
        let x = &self.nodes[a.0].value;
        let mut v = vec![0.0; out_rows * c];
        for i in 0..out_rows {
            for j in 0..c {
                v[i * c + j] = x[argmax[i * c + j] * c + j];
            }
        }
        self.push(Op::GatherEntries { x: a, argmax }, out_rows, c, v)
    }

    fn scatter_entries(&mut self, a: TensorId, rows_out: usize, argmax: Arc<Vec<usize>>) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        debug_assert_eq!(argmax.len(), r * c);
        let x = &self.nodes[a.0].value;
        let mut v = vec![0.0; rows_out * c];
        for i in 0..r {
            for j in 0..c {
                v[argmax[i * c + j] * c + j] += x[i * c + j];
            }
        }
        self.push(
            Op::ScatterEntries {
                x: a,
                rows_out,
                argmax,
            },
            rows_out,
            c,
            v,
        )
    }

    // ---- layout ----

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (r, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if r != rb {
            return Err(self.mismatch("concat_cols", &[a, b]));
        }
        let xa = &self.nodes[a.0].value;
        let xb = &self.nodes[b.0].value;
        let mut v = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            v.extend_from_slice(&xa[i * ca..(i + 1) * ca]);
            v.extend_from_slice(&xb[i * cb..(i + 1) * cb]);
        }
        self.push(Op::ConcatCols(a, b), r, ca + cb, v)
    }

    pub fn slice_cols(&mut self, a: TensorId, from: usize, to: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if from >= to || to > c {
            return Err(self.mismatch("slice_cols", &[a]));
        }
        let x = &self.nodes[a.0].value;
        let w = to - from;
        let mut v = Vec::with_capacity(r * w);
        for i in 0..r {
            v.extend_from_slice(&x[i * c + from..i * c + to]);
        }
        self.push(Op::SliceCols { x: a, from, to }, r, w, v)
    }

    fn pad_cols(&mut self, a: TensorId, from: usize, total: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if from + c > total {
            return Err(self.mismatch("pad_cols", &[a]));
        }
        let x = &self.nodes[a.0].value;
        let mut v = vec![0.0; r * total];
        for i in 0..r {
            v[i * total + from..i * total + from + c].copy_from_slice(&x[i * c..(i + 1) * c]);
        }
        self.push(Op::PadCols { x: a, from, total }, r, total, v)
    }

    /// Select rows by index; duplicate indices are allowed.
    pub fn gather_rows(&mut self, a: TensorId, idx: Vec<usize>) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if idx.is_empty() || idx.iter().any(|&i| i >= r) {
            return Err(self.mismatch("gather_rows", &[a]));
        }
        let x = &self.nodes[a.0].value;
        let mut v = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            v.extend_from_slice(&x[i * c..(i + 1) * c]);
        }
        let rows = idx.len();
        self.push(
            Op::GatherRows {
                x: a,
                idx: Arc::new(idx),
            },
            rows,
            c,
            v,
        )
    }

    fn scatter_add_rows(&mut self, a: TensorId, rows_out: usize, idx: Arc<Vec<usize>>) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        debug_assert_eq!(idx.len(), r);
        let x = &self.nodes[a.0].value;
        let mut v = vec![0.0; rows_out * c];
        for (i, &t) in idx.iter().enumerate() {
            for j in 0..c {
                v[t * c + j] += x[i * c + j];
            }
        }
        self.push(
            Op::ScatterAddRows {
                x: a,
                rows_out,
                idx,
            },
            rows_out,
            c,
            v,
        )
    }

    pub fn reshape(&mut self, a: TensorId, rows: usize, cols: usize) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if r * c != rows * cols || rows == 0 {
            return Err(self.mismatch("reshape", &[a]));
        }
        let v = self.nodes[a.0].value.clone();
        self.push(Op::Reshape(a), rows, cols, v)
    }

    // ---- composites ----

    /// Row-wise softmax, stabilized by subtracting each row's max.
    pub fn softmax_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (_, c) = self.shape(a);
        let at = self.transpose(a)?;
        let (tr, _) = self.shape(at);
        let colmax = self.segment_max_rows(at, tr)?; // 1 x rows_of_a
        let rowmax = self.transpose(colmax)?; // rows_of_a x 1
        let shifted = {
            let wide = self.broadcast_col(rowmax, c)?;
            self.sub(a, wide)?
        };
        let e = self.exp(shifted)?;
        let denom = self.sum_cols(e)?;
        let inv = self.recip(denom)?;
        let wide = self.broadcast_col(inv, c)?;
        self.mul(e, wide)
    }

    /// Sum of squared entries as a 1x1 tensor.
    pub fn squared_norm(&mut self, a: TensorId) -> Result<TensorId> {
        let sq = self.mul(a, a)?;
        self.sum_all(sq)
    }

    /// Batch norm over rows with batch statistics; returns the normalized
    /// output plus the batch mean/variance for running-average updates.
    /// Variance is the population variance (divides by N).
    pub fn batch_norm_train(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
    ) -> Result<BatchNormOut> {
        let (r, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(self.mismatch("batch_norm", &[x, gamma, beta]));
        }
        let mean = self.mean_rows(x)?;
        let mean_wide = self.broadcast_row(mean, r)?;
        let centered = self.sub(x, mean_wide)?;
        let sq = self.mul(centered, centered)?;
        let var = self.mean_rows(sq)?;
        let var_eps = self.add_scalar(var, BN_EPS)?;
        let std = self.sqrt(var_eps)?;
        let inv = self.recip(std)?;
        let inv_wide = self.broadcast_row(inv, r)?;
        let xhat = self.mul(centered, inv_wide)?;
        let g_wide = self.broadcast_row(gamma, r)?;
        let scaled = self.mul(xhat, g_wide)?;
        let b_wide = self.broadcast_row(beta, r)?;
        let y = self.add(scaled, b_wide)?;
        Ok(BatchNormOut {
            y,
            batch_mean: self.value(mean).to_vec(),
            batch_var: self.value(var).to_vec(),
        })
    }

    /// Batch norm using fixed running statistics (evaluation mode).
    pub fn batch_norm_eval(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        running_mean: &[f64],
        running_var: &[f64],
    ) -> Result<TensorId> {
        let (r, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) || running_mean.len() != c || running_var.len() != c {
            return Err(self.mismatch("batch_norm", &[x, gamma, beta]));
        }
        let mean = self.leaf(1, c, running_mean.to_vec())?;
        let scale: Vec<f64> = running_var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let inv = self.leaf(1, c, scale)?;
        let mean_wide = self.broadcast_row(mean, r)?;
        let centered = self.sub(x, mean_wide)?;
        let inv_wide = self.broadcast_row(inv, r)?;
        let xhat = self.mul(centered, inv_wide)?;
        let g_wide = self.broadcast_row(gamma, r)?;
        let scaled = self.mul(xhat, g_wide)?;
        let b_wide = self.broadcast_row(beta, r)?;
        self.add(scaled, b_wide)
    }

    // ---- backward ----

    /// Reverse-mode gradients of a scalar `output` with respect to `wrt`.
    ///
    /// The backward pass is recorded on the tape. With `create_graph` the
    /// returned tensors keep their node ids so they can be differentiated
    /// again; without it the recorded backward nodes are discarded and the
    /// returned tensors are detached values.
    pub fn backward(
        &mut self,
        output: TensorId,
        wrt: &[TensorId],
        create_graph: bool,
    ) -> Result<Vec<Tensor>> {
        self.check_id(output, "backward output")?;
        for &w in wrt {
            self.check_id(w, "backward wrt")?;
        }
        {
            let (r, c) = self.shape(output);
            if (r, c) != (1, 1) {
                return Err(Error::invalid(format!(
                    "backward: output must be scalar, got {}x{}",
                    r, c
                )));
            }
        }
        let mark = self.nodes.len();
        let mut adjoint: Vec<Option<TensorId>> = vec![None; mark];
        let seed = self.scalar(1.0)?;
        adjoint[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoint, a, g)?;
                    self.accumulate(&mut adjoint, b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoint, a, g)?;
                    let neg = self.scale(g, -1.0)?;
                    self.accumulate(&mut adjoint, b, neg)?;
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let gb = self.mul(g, a)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::AddScalar(a, _) => {
                    self.accumulate(&mut adjoint, a, g)?;
                }
                Op::MulConst(a, k) => {
                    let ga = self.mul_const(g, k)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b)?;
                    let ga = self.matmul(g, bt)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let at = self.transpose(a)?;
                    let gb = self.matmul(at, g)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::LeakyRelu(a, alpha) => {
                    // Slope mask from the forward input; constant under
                    // re-differentiation.
                    let mask: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .map(|&x| if x > 0.0 { 1.0 } else { alpha })
                        .collect();
                    let ga = self.mul_const(g, Arc::new(mask))?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let y = TensorId(i);
                    let gy = self.mul(g, y)?;
                    let ny = self.scale(y, -1.0)?;
                    let one_minus = self.add_scalar(ny, 1.0)?;
                    let ga = self.mul(gy, one_minus)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Exp(a) => {
                    let ga = self.mul(g, TensorId(i))?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Ln(a) => {
                    let inv = self.recip(a)?;
                    let ga = self.mul(g, inv)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Sqrt(a) => {
                    let inv = self.recip(TensorId(i))?;
                    let half = self.scale(inv, 0.5)?;
                    let ga = self.mul(g, half)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Recip(a) => {
                    let y = TensorId(i);
                    let y2 = self.mul(y, y)?;
                    let gy = self.mul(g, y2)?;
                    let ga = self.scale(gy, -1.0)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumRows(a) => {
                    let (r, _) = self.shape(a);
                    let ga = self.broadcast_row(g, r)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumCols(a) => {
                    let (_, c) = self.shape(a);
                    let ga = self.broadcast_col(g, c)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(a);
                    let ga = self.broadcast_scalar(g, r, c)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::MeanRows(a) => {
                    let (r, _) = self.shape(a);
                    let wide = self.broadcast_row(g, r)?;
                    let ga = self.scale(wide, 1.0 / r as f64)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastRow(a, _) => {
                    let ga = self.sum_rows(g)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastCol(a, _) => {
                    let ga = self.sum_cols(g)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastScalar(a, _, _) => {
                    let ga = self.sum_all(g)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SegmentMaxRows { x, argmax, .. } => {
                    let (r, _) = self.shape(x);
                    let ga = self.scatter_entries(g, r, argmax)?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::GatherEntries { x, argmax } => {
                    let (r, _) = self.shape(x);
                    let ga = self.scatter_entries(g, r, argmax)?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::ScatterEntries { x, argmax, .. } => {
                    let ga = self.gather_entries(g, argmax)?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::ConcatCols(a, b) => {
                    let (_, ca) = self.shape(a);
                    let (_, cb) = self.shape(b);
                    let ga = self.slice_cols(g, 0, ca)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let gb = self.slice_cols(g, ca, ca + cb)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::SliceCols { x, from, .. } => {
                    let (_, total) = self.shape(x);
                    let ga = self.pad_cols(g, from, total)?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::PadCols { x, from, .. } => {
                    let (_, c) = self.shape(x);
                    let ga = self.slice_cols(g, from, from + c)?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::GatherRows { x, idx } => {
                    let (r, _) = self.shape(x);
                    let ga = self.scatter_add_rows(g, r, idx)?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::ScatterAddRows { x, idx, .. } => {
                    let ga = self.gather_rows(g, idx.as_ref().clone())?;
                    self.accumulate(&mut adjoint, x, ga)?;
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(a);
                    let ga = self.reshape(g, r, c)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
            }
        }

        let mut grads = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let id = match adjoint[w.0] {
                Some(id) => id,
                None => {
                    let (r, c) = self.shape(w);
                    self.leaf(r, c, vec![0.0; r * c])?
                }
            };
            grads.push(self.tensor(id));
        }
        if !create_graph {
            for g in &mut grads {
                g.id = None;
            }
            self.nodes.truncate(mark);
        }
        Ok(grads)
    }

    fn accumulate(
        &mut self,
        adjoint: &mut [Option<TensorId>],
        target: TensorId,
        g: TensorId,
    ) -> Result<()> {
        adjoint[target.0] = Some(match adjoint[target.0] {
            None => g,
            Some(prev) => self.add(prev, g)?,
        });
        Ok(())
    }

    // ---- diagnostics ----

    /// Recompute every node from its inputs and check the recorded values are
    /// reproduced bit-for-bit.
    pub fn verify_replay(&self) -> Result<()> {
        let mut replayed: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let fetch = |id: TensorId| -> &[f64] { &replayed[id.0] };
            let value = match &node.op {
                Op::Leaf => node.value.clone(),
                _ => self.recompute(&node.op, node.rows, node.cols, &fetch),
            };
            if value != node.value {
                return Err(Error::Numerical(format!(
                    "replay mismatch at node {} ({})",
                    i,
                    node.op.name()
                )));
            }
            replayed.push(value);
        }
        Ok(())
    }

    fn recompute<'a>(
        &self,
        op: &Op,
        _rows: usize,
        cols: usize,
        fetch: &dyn Fn(TensorId) -> &'a [f64],
    ) -> Vec<f64> {
        match op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b) => fetch(*a).iter().zip(fetch(*b)).map(|(x, y)| x + y).collect(),
            Op::Sub(a, b) => fetch(*a).iter().zip(fetch(*b)).map(|(x, y)| x - y).collect(),
            Op::Mul(a, b) => fetch(*a).iter().zip(fetch(*b)).map(|(x, y)| x * y).collect(),
            Op::Scale(a, c) => fetch(*a).iter().map(|x| x * c).collect(),
            Op::AddScalar(a, c) => fetch(*a).iter().map(|x| x + c).collect(),
            Op::MulConst(a, k) => fetch(*a).iter().zip(k.iter()).map(|(x, m)| x * m).collect(),
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let (_, n) = self.shape(*b);
                matmul_kernel(fetch(*a), fetch(*b), m, k, n)
            }
            Op::Transpose(a) => {
                let (r, c) = self.shape(*a);
                let x = fetch(*a);
                let mut v = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        v[j * r + i] = x[i * c + j];
                    }
                }
                v
            }
            Op::LeakyRelu(a, alpha) => fetch(*a)
                .iter()
                .map(|&x| if x > 0.0 { x } else { alpha * x })
                .collect(),
            Op::Sigmoid(a) => fetch(*a).iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect(),
            Op::Exp(a) => fetch(*a).iter().map(|x| x.exp()).collect(),
            Op::Ln(a) => fetch(*a).iter().map(|x| x.ln()).collect(),
            Op::Sqrt(a) => fetch(*a).iter().map(|x| x.sqrt()).collect(),
            Op::Recip(a) => fetch(*a).iter().map(|x| x.recip()).collect(),
            Op::SumRows(a) | Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let x = fetch(*a);
                let divide = matches!(op, Op::MeanRows(_));
                let mut out = vec![0.0; c];
                let mut buf = vec![0.0; r];
                for j in 0..c {
                    for i in 0..r {
                        buf[i] = x[i * c + j];
                    }
                    out[j] = sorted_sum(&mut buf);
                    if divide {
                        out[j] /= r as f64;
                    }
                }
                out
            }
            Op::SumCols(a) => {
                let (r, c) = self.shape(*a);
                let x = fetch(*a);
                let mut out = vec![0.0; r];
                let mut buf = vec![0.0; c];
                for i in 0..r {
                    buf.copy_from_slice(&x[i * c..(i + 1) * c]);
                    out[i] = sorted_sum(&mut buf);
                }
                out
            }
            Op::SumAll(a) => {
                let mut buf = fetch(*a).to_vec();
                vec![sorted_sum(&mut buf)]
            }
            Op::BroadcastRow(a, n) => {
                let x = fetch(*a);
                let mut v = Vec::with_capacity(n * x.len());
                for _ in 0..*n {
                    v.extend_from_slice(x);
                }
                v
            }
            Op::BroadcastCol(a, d) => {
                let x = fetch(*a);
                let mut v = Vec::with_capacity(x.len() * d);
                for &xi in x {
                    for _ in 0..*d {
                        v.push(xi);
                    }
                }
                v
            }
            Op::BroadcastScalar(a, r, c) => vec![fetch(*a)[0]; r * c],
            Op::SegmentMaxRows { x, block, .. } => {
                let (r, c) = self.shape(*x);
                let xv = fetch(*x);
                let out_rows = r / block;
                let mut v = vec![0.0; out_rows * c];
                for b in 0..out_rows {
                    for j in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        for i in b * block..(b + 1) * block {
                            best = best.max(xv[i * c + j]);
                        }
                        v[b * c + j] = best;
                    }
                }
                v
            }
            Op::GatherEntries { x, argmax } => {
                let (_, c) = self.shape(*x);
                let xv = fetch(*x);
                argmax
                    .iter()
                    .enumerate()
                    .map(|(flat, &src)| xv[src * c + flat % c])
                    .collect()
            }
            Op::ScatterEntries { x, argmax, rows_out } => {
                let (r, c) = self.shape(*x);
                let xv = fetch(*x);
                let mut v = vec![0.0; rows_out * cols];
                for i in 0..r {
                    for j in 0..c {
                        v[argmax[i * c + j] * c + j] += xv[i * c + j];
                    }
                }
                v
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = self.shape(*a);
                let (_, cb) = self.shape(*b);
                let xa = fetch(*a);
                let xb = fetch(*b);
                let mut v = Vec::with_capacity(r * (ca + cb));
                for i in 0..r {
                    v.extend_from_slice(&xa[i * ca..(i + 1) * ca]);
                    v.extend_from_slice(&xb[i * cb..(i + 1) * cb]);
                }
                v
            }
            Op::SliceCols { x, from, to } => {
                let (r, c) = self.shape(*x);
                let xv = fetch(*x);
                let mut v = Vec::with_capacity(r * (to - from));
                for i in 0..r {
                    v.extend_from_slice(&xv[i * c + from..i * c + to]);
                }
                v
            }
            Op::PadCols { x, from, total } => {
                let (r, c) = self.shape(*x);
                let xv = fetch(*x);
                let mut v = vec![0.0; r * total];
                for i in 0..r {
                    v[i * total + from..i * total + from + c]
                        .copy_from_slice(&xv[i * c..(i + 1) * c]);
                }
                v
            }
            Op::GatherRows { x, idx } => {
                let (_, c) = self.shape(*x);
                let xv = fetch(*x);
                let mut v = Vec::with_capacity(idx.len() * c);
                for &i in idx.iter() {
                    v.extend_from_slice(&xv[i * c..(i + 1) * c]);
                }
                v
            }
            Op::ScatterAddRows { x, idx, rows_out } => {
                let (r, c) = self.shape(*x);
                let xv = fetch(*x);
                let mut v = vec![0.0; rows_out * cols];
                for i in 0..r {
                    let t = idx[i];
                    for j in 0..c {
                        v[t * c + j] += xv[i * c + j];
                    }
                }
                v
            }
            Op::Reshape(a) => fetch(*a).to_vec(),
        }
    }

    /// Tape structure as JSON (op kinds, shapes, inputs) for inspection.
    pub fn dump_json(&self) -> String {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                serde_json::json!({
                    "id": i,
                    "op": n.op.name(),
                    "inputs": n.op.inputs().iter().map(|t| t.0).collect::<Vec<_>>(),
                    "shape": [n.rows, n.cols],
                })
            })
            .collect();
        serde_json::Value::Array(nodes).to_string()
    }
}

/// Result of a training-mode batch norm: output node plus batch statistics.
pub struct BatchNormOut {
    pub y: TensorId,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}
