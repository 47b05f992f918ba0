//! Reverse-mode differentiation over an append-only operation record.
//!
//! Every op appends one node holding its forward value. Nodes whose inputs
//! all lack `requires_grad` are stored as constants and never revisited by
//! [`Tape::backward`].

use super::ops::{sigmoid, softplus};
use super::tensor::Tensor;
use crate::error::{ensure, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Const,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul { scalar: Var, tensor: Var },
    ScalarAdd { scalar: Var, tensor: Var },
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    ExpandRows(Var),
    Reshape(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    ClampMin { input: Var, min: f64 },
    LogSumExp(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    Conv1d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    ConvTranspose1d { x: Var, w: Var, b: Option<Var>, stride: usize },
    /// Scalar-valued op whose local gradients were computed in the forward pass.
    Fused { inputs: Vec<Var>, local: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvGeom {
    /// Left-padded convolution whose output at `t` sees inputs `<= t` only.
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            dilation,
            pad_left: (kernel - 1) * dilation,
            pad_right: 0,
        }
    }

    /// Non-overlapping windows: kernel width equals the stride.
    pub fn strided(stride: usize) -> Self {
        Self {
            stride,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
        }
    }

    pub fn output_len(&self, input_len: usize, kernel: usize) -> Option<usize> {
        let padded = input_len + self.pad_left + self.pad_right;
        let span = self.dilation * (kernel - 1) + 1;
        if padded < span || self.stride == 0 {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Append-only computation record.
///
/// Leaves created with `requires_grad = true` receive accumulated gradients
/// from [`Tape::backward`]; everything else is recomputed per tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        let bad = t.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
        Err(Error::Numeric {
            op,
            detail: format!("non-finite output at flat index {bad} (value {})", t.data()[bad]),
        })
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

    /// Drops every node. Handles issued earlier become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.leaf_grads.clear();
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.leaf_grads {
            *g = None;
        }
    }

    pub(crate) fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        check_finite(name, &value)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Const };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.leaf_grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a scalar op whose gradient w.r.t. each input was computed by
    /// the caller during the forward pass.
    pub(crate) fn fused(&mut self, name: &'static str, value: f64, inputs: Vec<Var>, local: Vec<Vec<f64>>) -> Result<Var> {
        debug_assert_eq!(inputs.len(), local.len());
        let ins = inputs.clone();
        self.push(name, Tensor::scalar(value), Op::Fused { inputs, local }, &ins)
    }

    /// Propagates d(root)/d(node) back to every `requires_grad` leaf.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        ensure!(
            self.nodes[root.0].value.is_scalar(),
            "backward needs a scalar root, got shape {:?}",
            self.nodes[root.0].value.shape()
        );
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut gbuf: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        gbuf[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = gbuf[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let slot = &mut self.leaf_grads[i];
                match slot {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g),
                }
                continue;
            }
            self.backprop_node(i, &g, &mut gbuf);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], gbuf: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = gbuf[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        match &nodes[i].op {
            Op::Leaf | Op::Const => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                acc(*a, &mut |s| {
                    for ((x, gi), bi) in s.iter_mut().zip(g).zip(bv) {
                        *x += gi * bi;
                    }
                });
                acc(*b, &mut |s| {
                    for ((x, gi), ai) in s.iter_mut().zip(g).zip(av) {
                        *x += gi * ai;
                    }
                });
            }
            Op::ScalarMul { scalar, tensor } => {
                let c = nodes[scalar.0].value.item();
                let tv = nodes[tensor.0].value.data();
                if rg(*scalar) {
                    let dot: f64 = g.iter().zip(tv).map(|(a, b)| a * b).sum();
                    acc(*scalar, &mut |s| s[0] += dot);
                }
                acc(*tensor, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
            }
            Op::ScalarAdd { scalar, tensor } => {
                let total: f64 = g.iter().sum();
                acc(*scalar, &mut |s| s[0] += total);
                acc(*tensor, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Scale(a, c) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::Shift(a) | Op::Reshape(a) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y)),
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a.0].value.rows_cols();
                let n = nodes[b.0].value.last_dim();
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                // dA = G B^T
                acc(*a, &mut |s| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for c in 0..k {
                            let brow = &bv[c * n..(c + 1) * n];
                            s[r * k + c] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = A^T G
                acc(*b, &mut |s| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for c in 0..k {
                            let a_rc = av[r * k + c];
                            if a_rc == 0.0 {
                                continue;
                            }
                            let srow = &mut s[c * n..(c + 1) * n];
                            srow.iter_mut().zip(grow).for_each(|(x, y)| *x += a_rc * y);
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = nodes[a.0].value.rows_cols();
                acc(*a, &mut |s| {
                    for r in 0..m {
                        for c in 0..n {
                            s[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (_, out_cols) = out.rows_cols();
                let mut offset = 0;
                for v in inputs {
                    let (r, c) = nodes[v.0].value.rows_cols();
                    if *axis == 0 {
                        let start = offset * out_cols;
                        acc(*v, &mut |s| s.iter_mut().zip(&g[start..start + r * c]).for_each(|(x, y)| *x += y));
                        offset += r;
                    } else {
                        acc(*v, &mut |s| {
                            for row in 0..r {
                                let src = &g[row * out_cols + offset..row * out_cols + offset + c];
                                s[row * c..(row + 1) * c].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                            }
                        });
                        offset += c;
                    }
                }
            }
            Op::Slice { input, axis, start } => {
                let (_, in_cols) = nodes[input.0].value.rows_cols();
                let (r, c) = out.rows_cols();
                acc(*input, &mut |s| {
                    for row in 0..r {
                        for col in 0..c {
                            let (ir, ic) = if *axis == 0 { (row + start, col) } else { (row, col + start) };
                            s[ir * in_cols + ic] += g[row * c + col];
                        }
                    }
                });
            }
            Op::ExpandRows(a) => {
                let n = nodes[a.0].value.numel();
                acc(*a, &mut |s| {
                    for chunk in g.chunks(n) {
                        s.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Tanh(a) => acc(*a, &mut |s| {
                for ((x, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *x += gi * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |s| {
                for ((x, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *x += gi * y * (1.0 - y);
                }
            }),
            Op::Softplus(a) => {
                let iv = nodes[a.0].value.data();
                acc(*a, &mut |s| {
                    for ((x, gi), v) in s.iter_mut().zip(g).zip(iv) {
                        *x += gi * sigmoid(*v);
                    }
                })
            }
            Op::Exp(a) => acc(*a, &mut |s| {
                for ((x, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *x += gi * y;
                }
            }),
            Op::Log(a) => {
                let iv = nodes[a.0].value.data();
                acc(*a, &mut |s| {
                    for ((x, gi), v) in s.iter_mut().zip(g).zip(iv) {
                        *x += gi / v;
                    }
                })
            }
            Op::ClampMin { input, min } => {
                let iv = nodes[input.0].value.data();
                acc(*input, &mut |s| {
                    for ((x, gi), v) in s.iter_mut().zip(g).zip(iv) {
                        if *v >= *min {
                            *x += gi;
                        }
                    }
                })
            }
            Op::LogSumExp(a) => {
                let iv = nodes[a.0].value.data();
                let n = nodes[a.0].value.last_dim();
                acc(*a, &mut |s| {
                    for (r, (srow, irow)) in s.chunks_mut(n).zip(iv.chunks(n)).enumerate() {
                        let lse = out.data()[r];
                        for (x, v) in srow.iter_mut().zip(irow) {
                            *x += g[r] * (v - lse).exp();
                        }
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::SumRows(a) => {
                let n = nodes[a.0].value.last_dim();
                acc(*a, &mut |s| {
                    for row in s.chunks_mut(n) {
                        row.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                })
            }
            Op::SumCols(a) => {
                let n = nodes[a.0].value.last_dim();
                acc(*a, &mut |s| {
                    for (r, row) in s.chunks_mut(n).enumerate() {
                        row.iter_mut().for_each(|x| *x += g[r]);
                    }
                })
            }
            Op::Conv1d { x, w, b, geom } => {
                let xs = nodes[x.0].value.shape();
                let ws = nodes[w.0].value.shape();
                let (cin, tin) = (xs[0], xs[1]);
                let (cout, kw) = (ws[0], ws[2]);
                let tout = out.shape()[1];
                let xv = nodes[x.0].value.data();
                let wv = nodes[w.0].value.data();
                if let Some(b) = b {
                    acc(*b, &mut |s| {
                        for co in 0..cout {
                            s[co] += g[co * tout..(co + 1) * tout].iter().sum::<f64>();
                        }
                    });
                }
                let visit = |f: &mut dyn FnMut(usize, usize, usize, usize, usize)| {
                    for co in 0..cout {
                        for t in 0..tout {
                            for k in 0..kw {
                                let pos = (t * geom.stride + k * geom.dilation) as isize - geom.pad_left as isize;
                                if pos < 0 || pos as usize >= tin {
                                    continue;
                                }
                                for ci in 0..cin {
                                    f(co, t, k, ci, pos as usize);
                                }
                            }
                        }
                    }
                };
                if rg(*w) {
                    let mut dw = vec![0.0; wv.len()];
                    visit(&mut |co, t, k, ci, p| dw[(co * cin + ci) * kw + k] += g[co * tout + t] * xv[ci * tin + p]);
                    acc(*w, &mut |s| s.iter_mut().zip(&dw).for_each(|(a, b)| *a += b));
                }
                if rg(*x) {
                    let mut dx = vec![0.0; xv.len()];
                    visit(&mut |co, t, k, ci, p| dx[ci * tin + p] += g[co * tout + t] * wv[(co * cin + ci) * kw + k]);
                    acc(*x, &mut |s| s.iter_mut().zip(&dx).for_each(|(a, b)| *a += b));
                }
            }
            Op::ConvTranspose1d { x, w, b, stride } => {
                let xs = nodes[x.0].value.shape();
                let ws = nodes[w.0].value.shape();
                let (cin, tin) = (xs[0], xs[1]);
                let (cout, kw) = (ws[1], ws[2]);
                let tout = out.shape()[1];
                let xv = nodes[x.0].value.data();
                let wv = nodes[w.0].value.data();
                if let Some(b) = b {
                    acc(*b, &mut |s| {
                        for co in 0..cout {
                            s[co] += g[co * tout..(co + 1) * tout].iter().sum::<f64>();
                        }
                    });
                }
                if rg(*w) {
                    acc(*w, &mut |s| {
                        for ci in 0..cin {
                            for t in 0..tin {
                                let xval = xv[ci * tin + t];
                                for co in 0..cout {
                                    for k in 0..kw {
                                        s[(ci * cout + co) * kw + k] += xval * g[co * tout + t * stride + k];
                                    }
                                }
                            }
                        }
                    });
                }
                acc(*x, &mut |s| {
                    for ci in 0..cin {
                        for t in 0..tin {
                            let mut total = 0.0;
                            for co in 0..cout {
                                for k in 0..kw {
                                    total += wv[(ci * cout + co) * kw + k] * g[co * tout + t * stride + k];
                                }
                            }
                            s[ci * tin + t] += total;
                        }
                    }
                });
            }
            Op::Fused { inputs, local } => {
                for (v, lg) in inputs.iter().zip(local) {
                    acc(*v, &mut |s| s.iter_mut().zip(lg).for_each(|(x, y)| *x += g[0] * y));
                }
            }
        }
    }

    // ---- forward ops -----------------------------------------------------

    fn same_shape(&self, name: &str, a: Var, b: Var) -> Result<()> {
        ensure!(
            self.shape(a) == self.shape(b),
            "{name}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
        Ok(())
    }

    fn zip_map(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let av = self.value(a);
        let bv = self.value(b);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| f(*x)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, value, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiplies every entry of `tensor` by the single value held in `scalar`.
    pub fn scalar_mul(&mut self, scalar: Var, tensor: Var) -> Result<Var> {
        ensure!(self.value(scalar).is_scalar(), "scalar_mul: first operand must hold one value");
        let c = self.value(scalar).item();
        let t = self.value(tensor);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| c * x).collect())?;
        self.push("scalar_mul", value, Op::ScalarMul { scalar, tensor }, &[scalar, tensor])
    }

    /// Adds the single value held in `scalar` to every entry of `tensor`.
    pub fn scalar_add(&mut self, scalar: Var, tensor: Var) -> Result<Var> {
        ensure!(self.value(scalar).is_scalar(), "scalar_add: first operand must hold one value");
        let c = self.value(scalar).item();
        let t = self.value(tensor);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| c + x).collect())?;
        self.push("scalar_add", value, Op::ScalarAdd { scalar, tensor }, &[scalar, tensor])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("add_const", a, |x| x + c, Op::Shift(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.map("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map("log", a, f64::ln, Op::Log(a))
    }

    /// `max(a, min)` elementwise; gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, min: f64) -> Result<Var> {
        self.map("clamp_min", a, |x| x.max(min), Op::ClampMin { input: a, min })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        ensure!(sa.len() == 2 && sb.len() == 2, "matmul: rank-2 operands required, got {sa:?} and {sb:?}");
        ensure!(sa[1] == sb[0], "matmul: inner dimensions differ ({sa:?} x {sb:?})");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let orow = &mut out[r * n..(r + 1) * n];
            for c in 0..k {
                let a_rc = av[r * k + c];
                if a_rc == 0.0 {
                    continue;
                }
                let brow = &bv[c * n..(c + 1) * n];
                orow.iter_mut().zip(brow).for_each(|(o, x)| *o += a_rc * x);
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        ensure!(s.len() == 2, "transpose: rank-2 operand required, got {s:?}");
        let (m, n) = (s[0], s[1]);
        let av = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                out[c * m + r] = av[r * n + c];
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        ensure!(!inputs.is_empty(), "concat: no inputs");
        ensure!(axis < 2, "concat: axis must be 0 or 1");
        for v in inputs {
            ensure!(self.shape(*v).len() == 2, "concat: rank-2 operands required, got {:?}", self.shape(*v));
        }
        let other = 1 - axis;
        let fixed = self.shape(inputs[0])[other];
        for v in inputs {
            ensure!(
                self.shape(*v)[other] == fixed,
                "concat: operands disagree on axis {other} ({:?} vs {:?})",
                self.shape(inputs[0]),
                self.shape(*v)
            );
        }
        let total: usize = inputs.iter().map(|v| self.shape(*v)[axis]).sum();
        let value = if axis == 0 {
            let mut data = Vec::with_capacity(total * fixed);
            for v in inputs {
                data.extend_from_slice(self.value(*v).data());
            }
            Tensor::new(vec![total, fixed], data)?
        } else {
            let mut data = Vec::with_capacity(total * fixed);
            for r in 0..fixed {
                for v in inputs {
                    data.extend_from_slice(self.value(*v).row_slice(r));
                }
            }
            Tensor::new(vec![fixed, total], data)?
        };
        self.push(
            "concat",
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        ensure!(s.len() == 2 && axis < 2, "slice: rank-2 operand and axis 0/1 required");
        ensure!(start + len <= s[axis], "slice: range {start}..{} exceeds extent {}", start + len, s[axis]);
        let av = self.value(a).data();
        let value = if axis == 0 {
            Tensor::new(vec![len, s[1]], av[start * s[1]..(start + len) * s[1]].to_vec())?
        } else {
            let mut data = Vec::with_capacity(s[0] * len);
            for r in 0..s[0] {
                data.extend_from_slice(&av[r * s[1] + start..r * s[1] + start + len]);
            }
            Tensor::new(vec![s[0], len], data)?
        };
        self.push("slice", value, Op::Slice { input: a, axis, start }, &[a])
    }

    /// Repeats a `[1, n]` row `rows` times.
    pub fn expand_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        ensure!(s.len() == 2 && s[0] == 1, "expand_rows: expected [1, n], got {s:?}");
        let mut data = Vec::with_capacity(rows * s[1]);
        for _ in 0..rows {
            data.extend_from_slice(self.value(a).data());
        }
        let value = Tensor::new(vec![rows, s[1]], data)?;
        self.push("expand_rows", value, Op::ExpandRows(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    /// Max-shifted log-sum-exp over the last axis; output keeps a trailing 1.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.last_dim();
        ensure!(n > 0, "logsumexp: empty last axis");
        let data: Vec<f64> = t.data().chunks(n).map(logsumexp_slice).collect();
        let mut shape = t.shape().to_vec();
        if let Some(last) = shape.last_mut() {
            *last = 1;
        }
        let value = Tensor::new(shape, data)?;
        self.push("logsumexp", value, Op::LogSumExp(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        ensure!(n > 0, "mean of empty tensor");
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums over `axis` of a rank-2 tensor, keeping the reduced axis as size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        ensure!(s.len() == 2 && axis < 2, "sum_axis: rank-2 operand and axis 0/1 required");
        let av = self.value(a).data();
        if axis == 0 {
            let mut data = vec![0.0; s[1]];
            for row in av.chunks(s[1]) {
                data.iter_mut().zip(row).for_each(|(x, y)| *x += y);
            }
            let value = Tensor::new(vec![1, s[1]], data)?;
            self.push("sum_axis", value, Op::SumRows(a), &[a])
        } else {
            let data = av.chunks(s[1]).map(|r| r.iter().sum()).collect();
            let value = Tensor::new(vec![s[0], 1], data)?;
            self.push("sum_axis", value, Op::SumCols(a), &[a])
        }
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self.shape(a).get(axis).copied().unwrap_or(0);
        ensure!(n > 0, "mean_axis: empty axis");
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// 1-D convolution. `x` is `[channels, time]`, `w` is `[out, in, kernel]`,
    /// `b` is `[out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        ensure!(xs.len() == 2, "conv1d: input must be [channels, time], got {xs:?}");
        ensure!(ws.len() == 3, "conv1d: weight must be [out, in, kernel], got {ws:?}");
        ensure!(ws[1] == xs[0], "conv1d: weight expects {} input channels, input has {}", ws[1], xs[0]);
        ensure!(geom.dilation >= 1 && geom.stride >= 1, "conv1d: stride and dilation must be >= 1");
        let (cin, tin) = (xs[0], xs[1]);
        let (cout, kw) = (ws[0], ws[2]);
        if let Some(b) = b {
            ensure!(self.value(b).numel() == cout, "conv1d: bias must have {cout} entries");
        }
        let tout = geom
            .output_len(tin, kw)
            .ok_or_else(|| Error::Contract(format!("conv1d: input length {tin} too short for kernel {kw}")))?;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; cout * tout];
        for co in 0..cout {
            let bias = b.map(|b| self.value(b).data()[co]).unwrap_or(0.0);
            for t in 0..tout {
                let mut acc = bias;
                for k in 0..kw {
                    let pos = (t * geom.stride + k * geom.dilation) as isize - geom.pad_left as isize;
                    if pos < 0 || pos as usize >= tin {
                        continue;
                    }
                    let p = pos as usize;
                    for ci in 0..cin {
                        acc += wv[(co * cin + ci) * kw + k] * xv[ci * tin + p];
                    }
                }
                out[co * tout + t] = acc;
            }
        }
        let value = Tensor::new(vec![cout, tout], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv1d", value, Op::Conv1d { x, w, b, geom }, &inputs)
    }

    /// Transposed 1-D convolution. `x` is `[in, time]`, `w` is
    /// `[in, out, kernel]`; output length is `(time - 1) * stride + kernel`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        ensure!(xs.len() == 2, "conv_transpose1d: input must be [channels, time], got {xs:?}");
        ensure!(ws.len() == 3 && ws[0] == xs[0], "conv_transpose1d: weight must be [{}, out, kernel], got {ws:?}", xs[0]);
        ensure!(stride >= 1 && xs[1] >= 1, "conv_transpose1d: stride and length must be >= 1");
        let (cin, tin) = (xs[0], xs[1]);
        let (cout, kw) = (ws[1], ws[2]);
        if let Some(b) = b {
            ensure!(self.value(b).numel() == cout, "conv_transpose1d: bias must have {cout} entries");
        }
        let tout = (tin - 1) * stride + kw;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; cout * tout];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for co in 0..cout {
                out[co * tout..(co + 1) * tout].iter_mut().for_each(|o| *o = bv[co]);
            }
        }
        for ci in 0..cin {
            for t in 0..tin {
                let xval = xv[ci * tin + t];
                for co in 0..cout {
                    for k in 0..kw {
                        out[co * tout + t * stride + k] += xval * wv[(ci * cout + co) * kw + k];
                    }
                }
            }
        }
        let value = Tensor::new(vec![cout, tout], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv_transpose1d", value, Op::ConvTranspose1d { x, w, b, stride }, &inputs)
    }
}

pub(crate) fn logsumexp_slice(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
