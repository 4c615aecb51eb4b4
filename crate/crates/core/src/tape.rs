//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value; nodes only
//! reference earlier nodes, so the tape is topologically ordered by
//! construction. [`Tape::backward`] walks it in reverse and then clears it.
//! A tape is rebuilt for each forward pass.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::rng::mix;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Clamp applied to probabilities before taking logs in [`Tape::bce_prob`].
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulColumn(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Sqrt(Var),
    Recip(Var),
    Cos(Var),
    Sin(Var),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    SliceCols(Var, usize, usize),
    Reshape(Var, Rc<[usize]>),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    L2Norm(Var),
    SegmentMax(Var, Rc<[usize]>, usize),
    SegmentSum(Var, Rc<[usize]>, usize),
    Gather(Var, Rc<[usize]>),
    Conv1d(Var, Var, usize),
    AdaptiveMaxPool(Var, usize),
    BceWithLogits(Var, Rc<[f64]>, Rc<[f64]>),
    BceProb(Var, Rc<[f64]>, Rc<[f64]>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddBias(..) => "add_bias",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulColumn(..) => "mul_column",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Recip(..) => "recip",
            Op::Cos(..) => "cos",
            Op::Sin(..) => "sin",
            Op::Softmax(..) => "softmax",
            Op::Concat(..) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::Reshape(..) => "reshape",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumRows(..) => "sum_rows",
            Op::L2Norm(..) => "l2_norm",
            Op::SegmentMax(..) => "segment_max",
            Op::SegmentSum(..) => "segment_sum",
            Op::Gather(..) => "embedding_lookup",
            Op::Conv1d(..) => "conv1d",
            Op::AdaptiveMaxPool(..) => "adaptive_max_pool",
            Op::BceWithLogits(..) => "bce_with_logits",
            Op::BceProb(..) => "bce_prob",
        }
    }

    fn for_each_input(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Leaf => {}
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddBias(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulColumn(a, b)
            | Op::Conv1d(a, b, _) => {
                f(*a);
                f(*b);
            }
            Op::Concat(xs, _) => xs.iter().copied().for_each(f),
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Cos(a)
            | Op::Sin(a)
            | Op::Softmax(a, _)
            | Op::SliceCols(a, ..)
            | Op::Reshape(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumRows(a)
            | Op::L2Norm(a)
            | Op::SegmentMax(a, ..)
            | Op::SegmentSum(a, ..)
            | Op::Gather(a, _)
            | Op::AdaptiveMaxPool(a, _)
            | Op::BceWithLogits(a, ..)
            | Op::BceProb(a, ..) => f(*a),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
    /// Argmax positions for max-type ops; unused otherwise.
    aux: Vec<usize>,
}

/// Result of a backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    leaves: BTreeMap<Var, Tensor>,
    params: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    /// Gradient of a non-parameter leaf created with `requires_grad`.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.leaves.get(&var)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(id, t)| (*id, t))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Segment boundaries `[start, end)` of adaptive pooling cell `i`.
///
/// Cells follow `[floor(i*len/out), floor((i+1)*len/out))`; when the
/// sequence is shorter than `out` an empty cell is widened to one position.
pub fn pool_segment(i: usize, len: usize, out: usize) -> (usize, usize) {
    let start = i * len / out;
    let end = (i + 1) * len / out;
    if end > start {
        (start, end)
    } else {
        (start.min(len - 1), start.min(len - 1) + 1)
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param: None,
            aux: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Lifts a stored parameter onto the tape. Frozen parameters enter as
    /// constants and never receive gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone(), store.is_trainable(id));
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Replaces a leaf value; call [`Tape::replay`] to refresh dependents.
    pub fn set_leaf(&mut self, v: Var, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::contract("set_leaf on a non-leaf node"));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_leaf",
                lhs: node.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        node.value = value;
        Ok(())
    }

    /// Recomputes every non-leaf node from the current leaf values.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let (value, aux) = self.compute(&op)?;
            let node = &mut self.nodes[i];
            node.value = value;
            node.aux = aux;
        }
        Ok(())
    }

    /// Hash of every branch decision taken by non-smooth operations (ReLU
    /// masks, argmax picks, clamps). Two evaluations with equal signatures
    /// lie on the same smooth piece of the function.
    pub fn kink_signature(&self) -> u64 {
        let mut h = 0u64;
        let mut feed = |x: u64| h = mix(h ^ x);
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => {
                    for (i, x) in self.nodes[a.0].value.data().iter().enumerate() {
                        if *x > 0.0 {
                            feed(i as u64);
                        }
                    }
                    feed(u64::MAX);
                }
                Op::SegmentMax(..) | Op::AdaptiveMaxPool(..) => {
                    node.aux.iter().for_each(|&i| feed(i as u64));
                    feed(u64::MAX - 1);
                }
                Op::L2Norm(_) | Op::Sqrt(_) => {
                    for (i, x) in node.value.data().iter().enumerate() {
                        if *x == 0.0 {
                            feed(i as u64);
                        }
                    }
                    feed(u64::MAX - 2);
                }
                Op::BceProb(a, ..) => {
                    for (i, p) in self.nodes[a.0].value.data().iter().enumerate() {
                        if *p < PROB_EPS || *p > 1.0 - PROB_EPS {
                            feed(i as u64);
                        }
                    }
                    feed(u64::MAX - 3);
                }
                _ => {}
            }
        }
        h
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let (value, aux) = self.compute(&op)?;
        let mut requires_grad = false;
        op.for_each_input(|v| requires_grad |= self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
            aux,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            Ok(())
        } else {
            Err(Error::Shape {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn compute(&self, op: &Op) -> Result<(Tensor, Vec<usize>)> {
        let name = op.name();
        let mut aux = Vec::new();
        let val = |v: &Var| &self.nodes[v.0].value;
        let map = |v: &Var, f: &dyn Fn(f64) -> f64| -> Tensor {
            let x = val(v);
            Tensor::new(x.shape().to_vec(), x.data().iter().map(|&e| f(e)).collect())
                .expect("shape preserved")
        };
        let zip = |a: &Var, b: &Var, f: &dyn Fn(f64, f64) -> f64| -> Result<Tensor> {
            self.same_shape(name, *a, *b)?;
            let (x, y) = (val(a), val(b));
            Tensor::new(
                x.shape().to_vec(),
                x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect(),
            )
        };
        let out = match op {
            Op::Leaf => return Err(Error::contract("leaf nodes are not computed")),
            Op::MatMul(a, b) => {
                let (x, y) = (val(a), val(b));
                let (m, k) = x.dims2(name)?;
                let (k2, n) = y.dims2(name)?;
                if k != k2 {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: y.shape().to_vec(),
                    });
                }
                let (xd, yd) = (x.data(), y.data());
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let row = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let xv = xd[i * k + p];
                        if xv == 0.0 {
                            continue;
                        }
                        let yrow = &yd[p * n..(p + 1) * n];
                        for (o, yv) in row.iter_mut().zip(yrow) {
                            *o += xv * yv;
                        }
                    }
                }
                Tensor::matrix(m, n, out)?
            }
            Op::Add(a, b) => zip(a, b, &|p, q| p + q)?,
            Op::Sub(a, b) => zip(a, b, &|p, q| p - q)?,
            Op::Mul(a, b) => zip(a, b, &|p, q| p * q)?,
            Op::AddBias(a, b) => {
                let (x, bias) = (val(a), val(b));
                let (r, c) = x.dims2(name)?;
                if bias.shape() != [1, c] {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: bias.shape().to_vec(),
                    });
                }
                let mut out = x.data().to_vec();
                for row in 0..r {
                    for (o, b) in out[row * c..(row + 1) * c].iter_mut().zip(bias.data()) {
                        *o += b;
                    }
                }
                Tensor::matrix(r, c, out)?
            }
            Op::MulColumn(a, b) => {
                let (x, col) = (val(a), val(b));
                let (r, c) = x.dims2(name)?;
                if col.shape() != [r, 1] {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: col.shape().to_vec(),
                    });
                }
                let mut out = x.data().to_vec();
                for row in 0..r {
                    let s = col.data()[row];
                    out[row * c..(row + 1) * c].iter_mut().for_each(|o| *o *= s);
                }
                Tensor::matrix(r, c, out)?
            }
            Op::Scale(a, s) => map(a, &|x| x * s),
            Op::AddScalar(a, s) => map(a, &|x| x + s),
            Op::Relu(a) => map(a, &|x| if x > 0.0 { x } else { 0.0 }),
            Op::Sigmoid(a) => map(a, &sigmoid),
            Op::Log(a) => map(a, &libm::log),
            Op::Sqrt(a) => map(a, &libm::sqrt),
            Op::Recip(a) => map(a, &|x| 1.0 / x),
            Op::Cos(a) => map(a, &libm::cos),
            Op::Sin(a) => map(a, &libm::sin),
            Op::Softmax(a, axis) => {
                let x = val(a);
                let (r, c) = x.dims2(name)?;
                let (outer, inner, stride, step) = match axis {
                    1 => (r, c, c, 1),
                    0 => (c, r, 1, c),
                    _ => return Err(Error::contract("softmax axis must be 0 or 1")),
                };
                let mut out = vec![0.0; r * c];
                for o in 0..outer {
                    let idx = |i: usize| o * stride + i * step;
                    let mx = (0..inner)
                        .map(|i| x.data()[idx(i)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for i in 0..inner {
                        let e = libm::exp(x.data()[idx(i)] - mx);
                        out[idx(i)] = e;
                        total += e;
                    }
                    for i in 0..inner {
                        out[idx(i)] /= total;
                    }
                }
                Tensor::matrix(r, c, out)?
            }
            Op::Concat(xs, axis) => {
                if xs.is_empty() {
                    return Err(Error::contract("concat of zero tensors"));
                }
                let first = val(&xs[0]);
                let (r0, c0) = first.dims2(name)?;
                match axis {
                    0 => {
                        let mut data = Vec::new();
                        let mut rows = 0;
                        for v in xs {
                            let (r, c) = val(v).dims2(name)?;
                            if c != c0 {
                                return Err(Error::Shape {
                                    op: name,
                                    lhs: first.shape().to_vec(),
                                    rhs: val(v).shape().to_vec(),
                                });
                            }
                            rows += r;
                            data.extend_from_slice(val(v).data());
                        }
                        Tensor::matrix(rows, c0, data)?
                    }
                    1 => {
                        let mut cols = 0;
                        for v in xs {
                            let (r, c) = val(v).dims2(name)?;
                            if r != r0 {
                                return Err(Error::Shape {
                                    op: name,
                                    lhs: first.shape().to_vec(),
                                    rhs: val(v).shape().to_vec(),
                                });
                            }
                            cols += c;
                        }
                        let mut data = Vec::with_capacity(r0 * cols);
                        for row in 0..r0 {
                            for v in xs {
                                data.extend_from_slice(val(v).row_slice(row));
                            }
                        }
                        Tensor::matrix(r0, cols, data)?
                    }
                    _ => return Err(Error::contract("concat axis must be 0 or 1")),
                }
            }
            Op::SliceCols(a, start, len) => {
                let x = val(a);
                let (r, c) = x.dims2(name)?;
                if start + len > c || *len == 0 {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: vec![*start, *len],
                    });
                }
                let mut data = Vec::with_capacity(r * len);
                for row in 0..r {
                    data.extend_from_slice(&x.row_slice(row)[*start..start + len]);
                }
                Tensor::matrix(r, *len, data)?
            }
            Op::Reshape(a, shape) => val(a).clone().reshaped(shape.to_vec())?,
            Op::Sum(a) => Tensor::scalar(val(a).data().iter().sum()),
            Op::Mean(a) => {
                let x = val(a);
                if x.is_empty() {
                    return Err(Error::contract("mean of an empty tensor"));
                }
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            Op::SumRows(a) => {
                let x = val(a);
                let (r, _) = x.dims2(name)?;
                Tensor::column((0..r).map(|i| x.row_slice(i).iter().sum()).collect())
            }
            Op::L2Norm(a) => {
                let x = val(a);
                let (r, _) = x.dims2(name)?;
                Tensor::column(
                    (0..r)
                        .map(|i| libm::sqrt(x.row_slice(i).iter().map(|v| v * v).sum()))
                        .collect(),
                )
            }
            Op::SegmentMax(a, seg, num) => {
                let x = val(a);
                let (r, c) = x.dims2(name)?;
                if seg.len() != r {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: vec![seg.len()],
                    });
                }
                let mut out = vec![f64::NEG_INFINITY; num * c];
                aux = vec![usize::MAX; num * c];
                for (row, &s) in seg.iter().enumerate() {
                    if s >= *num {
                        return Err(Error::contract("segment id out of range"));
                    }
                    for col in 0..c {
                        let v = x.data()[row * c + col];
                        if aux[s * c + col] == usize::MAX || v > out[s * c + col] {
                            out[s * c + col] = v;
                            aux[s * c + col] = row;
                        }
                    }
                }
                if aux.contains(&usize::MAX) {
                    return Err(Error::contract("segment_max over an empty segment"));
                }
                Tensor::matrix(*num, c, out)?
            }
            Op::SegmentSum(a, seg, num) => {
                let x = val(a);
                let (r, c) = x.dims2(name)?;
                if seg.len() != r {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: vec![seg.len()],
                    });
                }
                let mut out = vec![0.0; num * c];
                for (row, &s) in seg.iter().enumerate() {
                    if s >= *num {
                        return Err(Error::contract("segment id out of range"));
                    }
                    for (o, v) in out[s * c..(s + 1) * c].iter_mut().zip(x.row_slice(row)) {
                        *o += v;
                    }
                }
                Tensor::matrix(*num, c, out)?
            }
            Op::Gather(a, idx) => {
                let table = val(a);
                let (v, d) = table.dims2(name)?;
                let mut data = Vec::with_capacity(idx.len() * d);
                for &i in idx.iter() {
                    if i >= v {
                        return Err(Error::contract("embedding index out of range"));
                    }
                    data.extend_from_slice(table.row_slice(i));
                }
                Tensor::matrix(idx.len(), d, data)?
            }
            Op::Conv1d(a, k, stride) => {
                let (x, w) = (val(a), val(k));
                let (m, cin) = x.dims2(name)?;
                let &[kw, kcin, cout] = w.shape() else {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: w.shape().to_vec(),
                    });
                };
                if kcin != cin || *stride == 0 {
                    return Err(Error::Shape {
                        op: name,
                        lhs: x.shape().to_vec(),
                        rhs: w.shape().to_vec(),
                    });
                }
                let pad = (kw - 1) / 2;
                let mout = m.div_ceil(*stride);
                let mut out = vec![0.0; mout * cout];
                for o in 0..mout {
                    let orow = &mut out[o * cout..(o + 1) * cout];
                    for t in 0..kw {
                        let pos = (o * stride + t) as isize - pad as isize;
                        if pos < 0 || pos as usize >= m {
                            continue;
                        }
                        let xrow = x.row_slice(pos as usize);
                        for (ci, &xv) in xrow.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &w.data()[(t * cin + ci) * cout..(t * cin + ci + 1) * cout];
                            for (ov, wv) in orow.iter_mut().zip(wrow) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
                Tensor::matrix(mout, cout, out)?
            }
            Op::AdaptiveMaxPool(a, p) => {
                let x = val(a);
                let (m, c) = x.dims2(name)?;
                if m == 0 || *p == 0 {
                    return Err(Error::contract("adaptive_max_pool on an empty signal"));
                }
                let mut out = vec![0.0; p * c];
                aux = vec![0; p * c];
                for i in 0..*p {
                    let (s, e) = pool_segment(i, m, *p);
                    for col in 0..c {
                        let mut best = s;
                        for row in s + 1..e {
                            if x.data()[row * c + col] > x.data()[best * c + col] {
                                best = row;
                            }
                        }
                        out[i * c + col] = x.data()[best * c + col];
                        aux[i * c + col] = best;
                    }
                }
                Tensor::matrix(*p, c, out)?
            }
            Op::BceWithLogits(a, y, w) => {
                let z = val(a);
                if z.len() != y.len() || z.len() != w.len() {
                    return Err(Error::Shape {
                        op: name,
                        lhs: z.shape().to_vec(),
                        rhs: vec![y.len(), w.len()],
                    });
                }
                let total = z
                    .data()
                    .iter()
                    .zip(y.iter().zip(w.iter()))
                    .map(|(&z, (&y, &w))| {
                        w * (z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs())))
                    })
                    .sum();
                Tensor::scalar(total)
            }
            Op::BceProb(a, y, w) => {
                let p = val(a);
                if p.len() != y.len() || p.len() != w.len() {
                    return Err(Error::Shape {
                        op: name,
                        lhs: p.shape().to_vec(),
                        rhs: vec![y.len(), w.len()],
                    });
                }
                let total = p
                    .data()
                    .iter()
                    .zip(y.iter().zip(w.iter()))
                    .map(|(&p, (&y, &w))| {
                        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        -w * (y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
                    })
                    .sum();
                Tensor::scalar(total)
            }
        };
        if !out.all_finite() {
            return Err(Error::NumericOverflow { op: name });
        }
        Ok((out, aux))
    }

    // ---- forward operations -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    /// `[n, c] + [1, c]`, broadcasting the bias row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddBias(x, bias))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// `[n, c] * [n, 1]`, scaling each row.
    pub fn mul_column(&mut self, x: Var, col: Var) -> Result<Var> {
        self.push(Op::MulColumn(x, col))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.push(Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        self.push(Op::AddScalar(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sigmoid(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Log(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sqrt(x))
    }

    pub fn recip(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Recip(x))
    }

    /// Rows scaled to unit length; `eps` keeps zero rows finite.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let n = self.l2_norm(x)?;
        let n = self.add_scalar(n, eps)?;
        let inv = self.recip(n)?;
        self.mul_column(x, inv)
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Cos(x))
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sin(x))
    }

    /// Softmax along `axis` (1: per row, 0: per column) of a matrix.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.push(Op::Softmax(x, axis))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.push(Op::Concat(xs.to_vec(), axis))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::SliceCols(x, start, len))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::Reshape(x, shape.into()))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Mean(x))
    }

    /// Row sums: `[n, c] -> [n, 1]`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SumRows(x))
    }

    /// Euclidean norm of each row: `[n, c] -> [n, 1]`.
    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        self.push(Op::L2Norm(x))
    }

    /// Coordinate-wise max over all rows: `[n, c] -> [1, c]`.
    pub fn max_over_rows(&mut self, x: Var) -> Result<Var> {
        let (r, _) = self.value(x).dims2("max_over_rows")?;
        self.segment_max(x, vec![0; r], 1)
    }

    /// Coordinate-wise max within each row segment: `[n, c] -> [num, c]`.
    pub fn segment_max(&mut self, x: Var, segments: Vec<usize>, num: usize) -> Result<Var> {
        self.push(Op::SegmentMax(x, segments.into(), num))
    }

    /// Sums rows sharing a segment id: `[n, c] -> [num, c]`.
    pub fn segment_sum(&mut self, x: Var, segments: Vec<usize>, num: usize) -> Result<Var> {
        self.push(Op::SegmentSum(x, segments.into(), num))
    }

    /// Row gather `table[indices]`: `[v, d] -> [n, d]`.
    pub fn embedding_lookup(&mut self, table: Var, indices: Vec<usize>) -> Result<Var> {
        self.push(Op::Gather(table, indices.into()))
    }

    /// 1-D convolution of a `[len, c_in]` signal with a `[width, c_in, c_out]`
    /// kernel, zero padded so that stride 1 keeps the length.
    pub fn conv1d(&mut self, signal: Var, kernel: Var, stride: usize) -> Result<Var> {
        self.push(Op::Conv1d(signal, kernel, stride))
    }

    /// `[len, c] -> [out_len, c]`, see [`pool_segment`].
    pub fn adaptive_max_pool(&mut self, signal: Var, out_len: usize) -> Result<Var> {
        self.push(Op::AdaptiveMaxPool(signal, out_len))
    }

    /// Weighted binary cross-entropy on logits, summed (not averaged).
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        self.push(Op::BceWithLogits(logits, targets.into(), weights.into()))
    }

    /// Weighted binary cross-entropy on probabilities, summed. Inputs are
    /// clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce_prob(&mut self, probs: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        self.push(Op::BceProb(probs, targets.into(), weights.into()))
    }

    // ---- reverse pass -------------------------------------------------------

    /// Propagates d(loss)/d(node) to every reachable leaf that requires
    /// gradient, then clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::contract("loss is not on this tape"));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::contract("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let t = Tensor::new(node.value.shape().to_vec(), g)?;
                match node.param {
                    Some(id) => out.params.push((id, t)),
                    None => {
                        out.leaves.insert(Var(i), t);
                    }
                }
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
        }
        self.nodes.clear();
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let needs = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot =
                grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        let y = &node.value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, w) = (val(*a), val(*b));
                let (m, k) = (x.shape()[0], x.shape()[1]);
                let n = w.shape()[1];
                if needs(*a) {
                    acc(*a, &mut |da| {
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let wrow = &w.data()[p * n..(p + 1) * n];
                                da[r * k + p] += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    });
                }
                if needs(*b) {
                    acc(*b, &mut |db| {
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let xv = x.data()[r * k + p];
                                if xv == 0.0 {
                                    continue;
                                }
                                for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d += xv * gv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::AddBias(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                let c = y.shape()[1];
                acc(*b, &mut |d| {
                    for row in g.chunks(c) {
                        add_into(d, row);
                    }
                });
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (x, w) = (val(*a), val(*b));
                acc(*a, &mut |d| {
                    for ((d, g), w) in d.iter_mut().zip(g).zip(w.data()) {
                        *d += g * w;
                    }
                });
                acc(*b, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(x.data()) {
                        *d += g * x;
                    }
                });
            }
            Op::MulColumn(a, b) => {
                let (x, col) = (val(*a), val(*b));
                let c = x.shape()[1];
                acc(*a, &mut |d| {
                    for (r, s) in col.data().iter().enumerate() {
                        for j in 0..c {
                            d[r * c + j] += g[r * c + j] * s;
                        }
                    }
                });
                acc(*b, &mut |d| {
                    for (r, dr) in d.iter_mut().enumerate() {
                        *dr += (0..c).map(|j| g[r * c + j] * x.data()[r * c + j]).sum::<f64>();
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |d| {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g * s)
            }),
            Op::AddScalar(a, _) | Op::Reshape(a, _) => acc(*a, &mut |d| add_into(d, g)),
            Op::Relu(a) => {
                let x = val(*a);
                acc(*a, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(x.data()) {
                        if *x > 0.0 {
                            *d += g;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                for ((d, g), y) in d.iter_mut().zip(g).zip(y.data()) {
                    *d += g * y * (1.0 - y);
                }
            }),
            Op::Log(a) => {
                let x = val(*a);
                acc(*a, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(x.data()) {
                        *d += g / x;
                    }
                });
            }
            Op::Sqrt(a) => acc(*a, &mut |d| {
                for ((d, g), y) in d.iter_mut().zip(g).zip(y.data()) {
                    if *y > 0.0 {
                        *d += g / (2.0 * y);
                    }
                }
            }),
            Op::Recip(a) => acc(*a, &mut |d| {
                for ((d, g), y) in d.iter_mut().zip(g).zip(y.data()) {
                    *d -= g * y * y;
                }
            }),
            Op::Cos(a) => {
                let x = val(*a);
                acc(*a, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(x.data()) {
                        *d -= g * libm::sin(*x);
                    }
                });
            }
            Op::Sin(a) => {
                let x = val(*a);
                acc(*a, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(x.data()) {
                        *d += g * libm::cos(*x);
                    }
                });
            }
            Op::Softmax(a, axis) => {
                let (r, c) = (y.shape()[0], y.shape()[1]);
                let (outer, inner, stride, step) = if *axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                acc(*a, &mut |d| {
                    for o in 0..outer {
                        let idx = |i: usize| o * stride + i * step;
                        let dot: f64 = (0..inner).map(|i| g[idx(i)] * y.data()[idx(i)]).sum();
                        for i in 0..inner {
                            d[idx(i)] += y.data()[idx(i)] * (g[idx(i)] - dot);
                        }
                    }
                });
            }
            Op::Concat(xs, axis) => {
                if *axis == 0 {
                    let mut offset = 0;
                    for v in xs {
                        let n = val(*v).len();
                        acc(*v, &mut |d| add_into(d, &g[offset..offset + n]));
                        offset += n;
                    }
                } else {
                    let (r, total) = (y.shape()[0], y.shape()[1]);
                    let mut offset = 0;
                    for v in xs {
                        let c = val(*v).shape()[1];
                        acc(*v, &mut |d| {
                            for row in 0..r {
                                add_into(
                                    &mut d[row * c..(row + 1) * c],
                                    &g[row * total + offset..row * total + offset + c],
                                );
                            }
                        });
                        offset += c;
                    }
                }
            }
            Op::SliceCols(a, start, len) => {
                let c = val(*a).shape()[1];
                let r = y.shape()[0];
                acc(*a, &mut |d| {
                    for row in 0..r {
                        add_into(
                            &mut d[row * c + start..row * c + start + len],
                            &g[row * len..(row + 1) * len],
                        );
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::SumRows(a) => {
                let c = val(*a).shape()[1];
                acc(*a, &mut |d| {
                    for (r, gv) in g.iter().enumerate() {
                        d[r * c..(r + 1) * c].iter_mut().for_each(|d| *d += gv);
                    }
                });
            }
            Op::L2Norm(a) => {
                let x = val(*a);
                let c = x.shape()[1];
                acc(*a, &mut |d| {
                    for (r, (gv, nv)) in g.iter().zip(y.data()).enumerate() {
                        if *nv > 0.0 {
                            for j in 0..c {
                                d[r * c + j] += gv * x.data()[r * c + j] / nv;
                            }
                        }
                    }
                });
            }
            Op::SegmentMax(a, ..) | Op::AdaptiveMaxPool(a, _) => {
                let c = y.shape()[1];
                acc(*a, &mut |d| {
                    for (cell, &row) in node.aux.iter().enumerate() {
                        d[row * c + cell % c] += g[cell];
                    }
                });
            }
            Op::SegmentSum(a, seg, _) => {
                let c = y.shape()[1];
                acc(*a, &mut |d| {
                    for (row, &s) in seg.iter().enumerate() {
                        add_into(&mut d[row * c..(row + 1) * c], &g[s * c..(s + 1) * c]);
                    }
                });
            }
            Op::Gather(a, idx) => {
                let c = y.shape()[1];
                acc(*a, &mut |d| {
                    for (row, &i) in idx.iter().enumerate() {
                        add_into(&mut d[i * c..(i + 1) * c], &g[row * c..(row + 1) * c]);
                    }
                });
            }
            Op::Conv1d(a, k, stride) => {
                let (x, w) = (val(*a), val(*k));
                let (m, cin) = (x.shape()[0], x.shape()[1]);
                let (kw, cout) = (w.shape()[0], w.shape()[2]);
                let pad = (kw - 1) / 2;
                let mout = y.shape()[0];
                let positions = |o: usize, t: usize| {
                    let pos = (o * stride + t) as isize - pad as isize;
                    (pos >= 0 && (pos as usize) < m).then_some(pos as usize)
                };
                acc(*a, &mut |dx| {
                    for o in 0..mout {
                        let grow = &g[o * cout..(o + 1) * cout];
                        for t in 0..kw {
                            let Some(pos) = positions(o, t) else { continue };
                            for ci in 0..cin {
                                let wrow = &w.data()[(t * cin + ci) * cout..(t * cin + ci + 1) * cout];
                                dx[pos * cin + ci] += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                });
                acc(*k, &mut |dw| {
                    for o in 0..mout {
                        let grow = &g[o * cout..(o + 1) * cout];
                        for t in 0..kw {
                            let Some(pos) = positions(o, t) else { continue };
                            for ci in 0..cin {
                                let xv = x.data()[pos * cin + ci];
                                if xv == 0.0 {
                                    continue;
                                }
                                let base = (t * cin + ci) * cout;
                                for (d, gv) in dw[base..base + cout].iter_mut().zip(grow) {
                                    *d += xv * gv;
                                }
                            }
                        }
                    }
                });
            }
            Op::BceWithLogits(a, t, w) => {
                let z = val(*a);
                acc(*a, &mut |d| {
                    for (j, dz) in d.iter_mut().enumerate() {
                        *dz += g[0] * w[j] * (sigmoid(z.data()[j]) - t[j]);
                    }
                });
            }
            Op::BceProb(a, t, w) => {
                let p = val(*a);
                acc(*a, &mut |d| {
                    for (j, dp) in d.iter_mut().enumerate() {
                        let pj = p.data()[j];
                        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&pj) {
                            continue;
                        }
                        *dp -= g[0] * w[j] * (t[j] / pj - (1.0 - t[j]) / (1.0 - pj));
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn elementary_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![0.0, -3.0, 2.5]));
        let s = t.sigmoid(x).unwrap();
        assert_eq!(t.value(s).data()[0], 0.5);
        let r = t.relu(x).unwrap();
        assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.5]);
        let ones = t.constant(Tensor::row(vec![1.0, 1.0]));
        let sm = t.softmax(ones, 1).unwrap();
        assert_eq!(t.value(sm).data(), &[0.5, 0.5]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::row(vec![1.0, 2.0]), true);
        let sq = t.mul(w, w).unwrap();
        let loss = t.sum(sq).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(w).unwrap().data(), &[2.0, 4.0]);
        assert!(t.is_empty(), "backward clears the tape");
    }

    #[test]
    fn bce_logit_gradient_at_zero() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::scalar(0.0), true);
        let loss = t.bce_with_logits(z, &[1.0], &[1.0]).unwrap();
        assert!(close(t.value(loss).item().unwrap(), core::f64::consts::LN_2));
        let g = t.backward(loss).unwrap();
        assert!(close(g.wrt(z).unwrap().data()[0], -0.5));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        match t.matmul(a, b) {
            Err(Error::Shape { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_output_is_an_overflow_error() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::row(vec![0.0]));
        assert_eq!(t.log(z), Err(Error::NumericOverflow { op: "log" }));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::row(vec![1.0, 2.0]), true);
        assert!(matches!(t.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn pool_segments_partition_long_inputs() {
        for len in [8usize, 9, 10, 37, 1000] {
            let mut next = 0;
            for i in 0..8 {
                let (s, e) = pool_segment(i, len, 8);
                assert_eq!(s, i * len / 8);
                assert_eq!(e, (i + 1) * len / 8);
                assert_eq!(s, next);
                next = e;
            }
            assert_eq!(next, len);
        }
        assert_eq!(pool_segment(3, 1, 8), (0, 1));
    }

    #[test]
    fn adaptive_pool_picks_segment_max() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::column(vec![1.0, 5.0, 2.0, 7.0, 3.0, 0.0]));
        let p = t.adaptive_max_pool(x, 3).unwrap();
        assert_eq!(t.value(p).data(), &[5.0, 7.0, 3.0]);
    }

    #[test]
    fn conv_same_padding_keeps_length() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let k = t.constant(Tensor::new(vec![3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap());
        let y = t.conv1d(x, k, 1).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 6.0, 9.0, 12.0, 9.0]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 2, vec![0.3, -1.2, 0.7, 1.9]).unwrap(), true);
        let w = t.leaf(Tensor::matrix(2, 2, vec![1.1, 0.4, -0.6, 0.2]).unwrap(), true);
        let h = t.matmul(x, w).unwrap();
        let s = t.softmax(h, 1).unwrap();
        let l = t.log(s).unwrap();
        let out = t.sum(l).unwrap();
        let before = t.value(out).clone();
        t.replay().unwrap();
        assert_eq!(t.value(out).data()[0].to_bits(), before.data()[0].to_bits());
    }
}
