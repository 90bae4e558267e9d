//! Reverse-mode automatic differentiation over a recorded trace.
//!
//! A [`Graph`] records every operation in execution order, so the node list
//! is topologically sorted by construction. [`Graph::backward`] walks it in
//! reverse and returns a [`Gradients`] table; the graph itself is never
//! mutated during the backward pass.
//!
//! ```
//! use srlf::autodiff::Graph;
//! use srlf::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![3.0]).unwrap());
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

use crate::tensor::{shape_err, Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberately wrong backward rules, used to show that gradient checking
/// catches a broken derivative.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// ReLU passes the gradient through unconditionally.
    ReluPassThrough,
    /// Sigmoid backward forgets its derivative factor.
    SigmoidIdentity,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    ScaleRows(Var, Vec<f64>),
    Embed(Var, Vec<usize>),
    Conv1d(Var, Var),
    MaxOverTime(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Sum(Var),
    SumSquares(Var),
    WeightedSum(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The recorded computation trace.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

/// Gradients of a scalar root with respect to every node on a
/// differentiable path.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when `v` does not influence the root.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
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

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Option<Fault>) -> Self {
        Self { nodes: Vec::new(), fault }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: trainable });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        check_finite(op_name, &value)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} times {k2}x{n}")));
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        self.push("matmul", Tensor::raw(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let d = t.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        self.push("transpose", Tensor::raw(vec![n, m], out), Op::Transpose(a), &[a])
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims2() != tb.dims2() {
            return Err(shape_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.push(name, Tensor::raw(shape, out), op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-n bias to every row of an m×n matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (_, n) = ta.dims2();
        if tb.len() != n {
            return Err(shape_err("add_bias", format!("{n} columns, bias of {}", tb.len())));
        }
        let bd = tb.data();
        let out: Vec<f64> = ta.data().chunks(n).flat_map(|row| row.iter().zip(bd).map(|(x, b)| x + b)).collect();
        let shape = ta.shape().to_vec();
        self.push("add_bias", Tensor::raw(shape, out), Op::AddBias(a, bias), &[a, bias])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x * c).collect();
        let shape = t.shape().to_vec();
        self.push("scale", Tensor::raw(shape, out), Op::Scale(a, c), &[a])
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        self.push(name, Tensor::raw(shape, out), op, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.map("ln", a, f64::ln, Op::Ln(a))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (_, n) = t.dims2();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let shape = t.shape().to_vec();
        self.push("softmax_rows", Tensor::raw(shape, out), Op::SoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Empty("concat_cols"))?;
        let m = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.value(p).dims2();
            if pm != m {
                return Err(shape_err("concat_cols", format!("row counts {m} and {pm}")));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push("concat_cols", Tensor::raw(vec![m, total], out), Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Empty("concat_rows"))?;
        let n = self.value(*first).cols();
        let mut out = Vec::new();
        let mut m = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(shape_err("concat_rows", format!("column counts {n} and {}", t.cols())));
            }
            m += t.rows();
            out.extend_from_slice(t.data());
        }
        self.push("concat_rows", Tensor::raw(vec![m, n], out), Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        if start >= end || end > n {
            return Err(shape_err("slice_cols", format!("[{start}, {end}) of {n} columns")));
        }
        let out: Vec<f64> = t.data().chunks(n).flat_map(|r| r[start..end].iter().copied()).collect();
        self.push("slice_cols", Tensor::raw(vec![m, end - start], out), Op::SliceCols(a, start, end), &[a])
    }

    /// Selects rows by index; repeated indices are allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        if idx.is_empty() {
            return Err(TensorError::Empty("gather_rows"));
        }
        let t = self.value(a);
        let (m, n) = t.dims2();
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= m {
                return Err(shape_err("gather_rows", format!("row {i} of {m}")));
            }
            out.extend_from_slice(&t.data()[i * n..(i + 1) * n]);
        }
        self.push("gather_rows", Tensor::raw(vec![idx.len(), n], out), Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// Multiplies row i by `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: &[f64]) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        if factors.len() != m {
            return Err(shape_err("scale_rows", format!("{m} rows, {} factors", factors.len())));
        }
        let out: Vec<f64> = t.data().chunks(n).zip(factors).flat_map(|(r, &f)| r.iter().map(move |x| x * f)).collect();
        let shape = t.shape().to_vec();
        self.push("scale_rows", Tensor::raw(shape, out), Op::ScaleRows(a, factors.to_vec()), &[a])
    }

    /// Embedding lookup. Id 0 is padding: it reads as the zero vector and
    /// never receives gradient.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(TensorError::Empty("embed"));
        }
        let t = self.value(table);
        let (v, d) = t.dims2();
        let mut out = vec![0.0; ids.len() * d];
        for (row, &id) in out.chunks_mut(d).zip(ids) {
            if id >= v {
                return Err(shape_err("embed", format!("token id {id} outside vocabulary of {v}")));
            }
            if id != 0 {
                row.copy_from_slice(&t.data()[id * d..(id + 1) * d]);
            }
        }
        self.push("embed", Tensor::raw(vec![ids.len(), d], out), Op::Embed(table, ids.to_vec()), &[table])
    }

    /// Valid 1-D convolution over the rows of `x` (L×d).
    ///
    /// `w` is either one kernel (h×d), giving a length L−h+1 feature map, or
    /// a bank of kernels (k×h×d), giving an (L−h+1)×k map with one column
    /// per kernel. No bias.
    pub fn conv1d_valid(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (l, d) = tx.dims2();
        let (nk, h, wd, single) = match tw.shape() {
            [h, wd] => (1, *h, *wd, true),
            [k, h, wd] => (*k, *h, *wd, false),
            s => return Err(shape_err("conv1d_valid", format!("kernel shape {s:?}"))),
        };
        if wd != d {
            return Err(shape_err("conv1d_valid", format!("input width {d}, kernel width {wd}")));
        }
        if l < h {
            return Err(shape_err("conv1d_valid", format!("sequence length {l} shorter than kernel {h}")));
        }
        let positions = l - h + 1;
        let span = h * d;
        let (xd, wdat) = (tx.data(), tw.data());
        let mut out = vec![0.0; positions * nk];
        for i in 0..positions {
            let window = &xd[i * d..i * d + span];
            for k in 0..nk {
                let kernel = &wdat[k * span..(k + 1) * span];
                out[i * nk + k] = window.iter().zip(kernel).map(|(a, b)| a * b).sum();
            }
        }
        let shape = if single { vec![positions] } else { vec![positions, nk] };
        self.push("conv1d_valid", Tensor::raw(shape, out), Op::Conv1d(x, w), &[x, w])
    }

    /// Max over the time axis. A 1-D input gives a scalar; a T×c input gives
    /// a 1×c row of column maxima. Ties go to the lowest index.
    pub fn max_over_time(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols, shape) = match t.shape() {
            [k] => (*k, 1, vec![1]),
            [r, c] => (*r, *c, vec![1, *c]),
            s => return Err(shape_err("max_over_time", format!("shape {s:?}"))),
        };
        let d = t.data();
        let mut arg = vec![0usize; cols];
        let mut out = vec![0.0; cols];
        for c in 0..cols {
            let mut best = 0;
            for r in 1..rows {
                if d[r * cols + c] > d[best * cols + c] {
                    best = r;
                }
            }
            arg[c] = best;
            out[c] = d[best * cols + c];
        }
        self.push("max_over_time", Tensor::raw(shape, out), Op::MaxOverTime(a, arg), &[a])
    }

    /// Gathers entries by flat index into a 1-D tensor.
    pub fn pick(&mut self, a: Var, flat: &[usize]) -> Result<Var> {
        if flat.is_empty() {
            return Err(TensorError::Empty("pick"));
        }
        let t = self.value(a);
        let mut out = Vec::with_capacity(flat.len());
        for &i in flat {
            if i >= t.len() {
                return Err(shape_err("pick", format!("index {i} of {}", t.len())));
            }
            out.push(t.data()[i]);
        }
        self.push("pick", Tensor::raw(vec![flat.len()], out), Op::Pick(a, flat.to_vec()), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum_squares();
        self.push("sum_squares", Tensor::scalar(s), Op::SumSquares(a), &[a])
    }

    /// Σ wᵢ·aᵢ as a scalar.
    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let t = self.value(a);
        if weights.len() != t.len() {
            return Err(shape_err("weighted_sum", format!("{} values, {} weights", t.len(), weights.len())));
        }
        let s = t.data().iter().zip(weights).map(|(x, w)| x * w).sum();
        self.push("weighted_sum", Tensor::scalar(s), Op::WeightedSum(a, weights.to_vec()), &[a])
    }

    /// Reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rt = self.value(root);
        if !rt.is_scalar() {
            return Err(TensorError::NonScalarRoot(rt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if !self.nodes[root.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        // Accumulates into the gradient buffer of `v` when it is on a
        // differentiable path.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &self.nodes[v.0];
            if !n.needs_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.cols();
                let (ad, bd) = (ta.data(), tb.data());
                acc(*a, &mut |ga| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            ga[r * k + p] += grow.iter().zip(&bd[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let av = ad[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims2();
                acc(*a, &mut |ga| {
                    for r in 0..m {
                        for c in 0..n {
                            ga[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * bd[j];
                    }
                });
                acc(*b, &mut |gb| {
                    for j in 0..gb.len() {
                        gb[j] += g[j] * ad[j];
                    }
                });
            }
            Op::AddBias(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |gb| {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
            }
            Op::Relu(a) => {
                let xd = self.value(*a).data();
                let pass_through = self.fault == Some(Fault::ReluPassThrough);
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        if pass_through || xd[j] > 0.0 {
                            ga[j] += g[j];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let identity = self.fault == Some(Fault::SigmoidIdentity);
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        let s = out[j];
                        ga[j] += if identity { g[j] } else { g[j] * s * (1.0 - s) };
                    }
                });
            }
            Op::Tanh(a) => {
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * (1.0 - out[j] * out[j]);
                    }
                });
            }
            Op::Ln(a) => {
                let xd = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] / xd[j];
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let n = node.value.cols();
                acc(*a, &mut |ga| {
                    for ((gr, yr), gar) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for j in 0..n {
                            gar[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let (m, total) = node.value.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(p, &mut |gp| {
                        for r in 0..m {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + offset + c];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, &mut |gp| {
                        gp.iter_mut().zip(&g[offset..offset + len]).for_each(|(x, y)| *x += y);
                    });
                    offset += len;
                }
            }
            Op::SliceCols(a, start, end) => {
                let n = self.value(*a).cols();
                let w = end - start;
                acc(*a, &mut |ga| {
                    for (r, grow) in g.chunks(w).enumerate() {
                        for (c, gv) in grow.iter().enumerate() {
                            ga[r * n + start + c] += gv;
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) | Op::Embed(a, idx) => {
                let skip_pad = matches!(node.op, Op::Embed(..));
                let n = node.value.cols();
                acc(*a, &mut |ga| {
                    for (grow, &src) in g.chunks(n).zip(idx.iter()) {
                        if skip_pad && src == 0 {
                            continue;
                        }
                        ga[src * n..(src + 1) * n].iter_mut().zip(grow).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::ScaleRows(a, factors) => {
                let n = node.value.cols();
                acc(*a, &mut |ga| {
                    for ((gar, grow), f) in ga.chunks_mut(n).zip(g.chunks(n)).zip(factors) {
                        gar.iter_mut().zip(grow).for_each(|(x, y)| *x += f * y);
                    }
                });
            }
            Op::Conv1d(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let d = tx.cols();
                let (nk, h) = match tw.shape() {
                    [h, _] => (1, *h),
                    s => (s[0], s[1]),
                };
                let span = h * d;
                let positions = tx.rows() - h + 1;
                let (xd, wd) = (tx.data(), tw.data());
                acc(*x, &mut |gx| {
                    for i in 0..positions {
                        let window = &mut gx[i * d..i * d + span];
                        for k in 0..nk {
                            let gv = g[i * nk + k];
                            if gv == 0.0 {
                                continue;
                            }
                            window.iter_mut().zip(&wd[k * span..(k + 1) * span]).for_each(|(a, b)| *a += gv * b);
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for i in 0..positions {
                        let window = &xd[i * d..i * d + span];
                        for k in 0..nk {
                            let gv = g[i * nk + k];
                            if gv == 0.0 {
                                continue;
                            }
                            gw[k * span..(k + 1) * span].iter_mut().zip(window).for_each(|(a, b)| *a += gv * b);
                        }
                    }
                });
            }
            Op::MaxOverTime(a, arg) => {
                let cols = arg.len();
                acc(*a, &mut |ga| {
                    for (c, &r) in arg.iter().enumerate() {
                        ga[r * cols + c] += g[c];
                    }
                });
            }
            Op::Pick(a, flat) => {
                acc(*a, &mut |ga| {
                    for (&i, gv) in flat.iter().zip(g) {
                        ga[i] += gv;
                    }
                });
            }
            Op::Sum(a) => {
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::SumSquares(a) => {
                let xd = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += 2.0 * xd[j] * g[0];
                    }
                });
            }
            Op::WeightedSum(a, weights) => {
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += weights[j] * g[0];
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn v(values: &[f64]) -> Tensor {
        Tensor::vector(values.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let a = g.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.constant(t(&[vec![5.0, 6.0], vec![7.0, 8.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);

        let i = g.constant(Tensor::identity(2));
        let ib = g.matmul(i, b).unwrap();
        assert_eq!(g.value(ib), g.value(b));

        let x = g.constant(t(&[vec![2.0]]));
        let y = g.constant(t(&[vec![3.0]]));
        let xy = g.matmul(x, y).unwrap();
        assert_eq!(g.value(xy).data(), &[6.0]);

        assert!(matches!(g.matmul(a, x), Err(TensorError::Shape { op: "matmul", .. })));
    }

    #[test]
    fn matmul_backward() {
        let mut g = Graph::new();
        let a = g.param(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.param(t(&[vec![5.0, 6.0], vec![7.0, 8.0]]));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c).unwrap();
        let gr = g.backward(s).unwrap();
        // G = ones: dA = 1·Bᵀ row sums, dB = Aᵀ·1 column sums
        assert_eq!(gr.get(a).unwrap(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(gr.get(b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let a = g.constant(v(&[1.0, 2.0]));
        let b = g.constant(v(&[3.0, 4.0]));
        let ones = g.constant(v(&[1.0, 1.0]));
        let m = g.mul(a, b).unwrap();
        assert_eq!(g.value(m).data(), &[3.0, 8.0]);
        let id = g.mul(a, ones).unwrap();
        assert_eq!(g.value(id), g.value(a));
        let z = g.sub(a, a).unwrap();
        assert_eq!(g.value(z).data(), &[0.0, 0.0]);
        let c = g.constant(v(&[1.0, 2.0, 3.0]));
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let mut g = Graph::new();
        let x = g.param(v(&[-1.0, 0.0, 2.0]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(r).unwrap();
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.get(x).unwrap(), &[0.0, 0.0, 1.0]);

        let neg = g.constant(v(&[-3.0, -0.5]));
        let rn = g.relu(neg).unwrap();
        assert_eq!(g.value(rn).data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let a = g.constant(t(&[vec![0.0, 0.0], vec![2f64.ln(), 0.0], vec![1000.0, 0.0]]));
        let p = g.softmax_rows(a).unwrap();
        let d = g.value(p).data();
        assert_eq!(&d[0..2], &[0.5, 0.5]);
        assert!((d[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[3] - 1.0 / 3.0).abs() < 1e-15);
        assert!((d[4] - 1.0).abs() < 1e-15 && d[5] >= 0.0 && d[5] < 1e-300);
    }

    #[test]
    fn concat_and_slice() {
        let mut g = Graph::new();
        let a = g.constant(t(&[vec![1.0]]));
        let b = g.constant(t(&[vec![2.0]]));
        let c = g.concat_cols(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0]);
        let single = g.concat_cols(&[a]).unwrap();
        assert_eq!(g.value(single).data(), g.value(a).data());
        let back = g.slice_cols(c, 1, 2).unwrap();
        assert_eq!(g.value(back).data(), &[2.0]);
        let tall = g.constant(t(&[vec![1.0], vec![2.0]]));
        assert!(g.concat_cols(&[a, tall]).is_err());
    }

    #[test]
    fn conv_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![1.0], vec![2.0], vec![3.0]]));
        let w = g.constant(t(&[vec![1.0], vec![-1.0]]));
        let e = g.conv1d_valid(x, w).unwrap();
        assert_eq!(g.value(e).shape(), &[2]);
        assert_eq!(g.value(e).data(), &[-1.0, -1.0]);

        let zeros = g.constant(Tensor::zeros(&[2, 1]));
        let ez = g.conv1d_valid(x, zeros).unwrap();
        assert_eq!(g.value(ez).data(), &[0.0, 0.0]);

        let full = g.constant(t(&[vec![1.0], vec![1.0], vec![2.0]]));
        let one = g.conv1d_valid(x, full).unwrap();
        assert_eq!(g.value(one).data(), &[9.0]);

        let long = g.constant(Tensor::zeros(&[4, 1]));
        assert!(g.conv1d_valid(x, long).is_err());
    }

    #[test]
    fn max_over_time_ties_and_routing() {
        let mut g = Graph::new();
        let a = g.param(v(&[0.0, 0.0, 5.0]));
        let m = g.max_over_time(a).unwrap();
        assert_eq!(g.value(m).data(), &[5.0]);
        assert_eq!(g.backward(m).unwrap().get(a).unwrap(), &[0.0, 0.0, 1.0]);

        let b = g.param(v(&[3.0, 3.0]));
        let mb = g.max_over_time(b).unwrap();
        assert_eq!(g.value(mb).data(), &[3.0]);
        assert_eq!(g.backward(mb).unwrap().get(b).unwrap(), &[1.0, 0.0]);

        let c = g.constant(v(&[-2.0, -7.0]));
        let mc = g.max_over_time(c).unwrap();
        assert_eq!(g.value(mc).data(), &[-2.0]);
    }

    #[test]
    fn backward_contracts() {
        let mut g = Graph::new();
        let a = g.param(v(&[1.0, 2.0]));
        let c = g.constant(Tensor::scalar(4.0));
        let gr = g.backward(c).unwrap();
        assert!(gr.get(a).is_none());

        let b = g.constant(v(&[5.0, -1.0]));
        let ab = g.mul(a, b).unwrap();
        let s = g.sum(ab).unwrap();
        assert_eq!(g.backward(s).unwrap().get(a).unwrap(), &[5.0, -1.0]);
        assert!(matches!(g.backward(ab), Err(TensorError::NonScalarRoot(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new();
        let x = g.param(v(&[2.0]));
        let y = g.add(x, x).unwrap();
        let z = g.mul(y, x).unwrap(); // 2x²
        assert_eq!(g.backward(z).unwrap().get(x).unwrap(), &[8.0]);
    }

    #[test]
    fn embed_pad_is_zero_and_gets_no_gradient() {
        let mut g = Graph::new();
        let table = g.param(t(&[vec![9.0, 9.0], vec![1.0, 2.0], vec![3.0, 4.0]]));
        let e = g.embed(table, &[0, 2, 1, 2]).unwrap();
        assert_eq!(g.value(e).data(), &[0.0, 0.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let s = g.sum(e).unwrap();
        assert_eq!(g.backward(s).unwrap().get(table).unwrap(), &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(g.embed(table, &[3]).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let z = g.constant(v(&[0.0]));
        assert_eq!(g.ln(z), Err(TensorError::NonFinite { op: "ln" }));
    }
}
