//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Every operation appends a node holding its output value, its inputs and
//! whatever activations the backward rule needs. Inputs always precede the
//! node that consumes them, so [`Tape::backward`] only has to walk the nodes
//! once in reverse append order.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    Tanh,
    Sigmoid,
    Gelu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Row {
        x: Var,
        row: usize,
    },
    StackRows(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    MaskFill {
        x: Var,
        keep: Vec<bool>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).unwrap())
    }

    /// Gradient with respect to `v`, all zeros when `v` is unreachable from the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

/// Output shape for a binary op where one operand may repeat along leading axes.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() >= b.len() && a[a.len() - b.len()..] == *b {
        Ok(a.to_vec())
    } else if b.len() > a.len() && b[b.len() - a.len()..] == *a {
        Ok(b.to_vec())
    } else {
        Err(shape_err(op, a, b))
    }
}

fn matrix_dims(t: &Tensor) -> Option<(usize, usize)> {
    match *t.shape() {
        [r, c] => Some((r, c)),
        _ => None,
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf; backward produces its gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = matrix_dims(ta).ok_or_else(|| shape_err("matmul", ta.shape(), tb.shape()))?;
        let (k2, n) = matrix_dims(tb).ok_or_else(|| shape_err("matmul", ta.shape(), tb.shape()))?;
        if k != k2 {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = matrix_dims(t).ok_or_else(|| shape_err("transpose", t.shape(), &[]))?;
        let src = t.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(x), rg))
    }

    /// Pointwise operation. Binary kinds take `y`; unary kinds ignore it.
    pub fn elementwise(&mut self, kind: Elementwise, x: Var, y: Option<Var>) -> Result<Var> {
        let need_y = || Error::Config(format!("{kind:?} needs a second operand"));
        match kind {
            Elementwise::Add => self.add(x, y.ok_or_else(need_y)?),
            Elementwise::Mul => self.mul(x, y.ok_or_else(need_y)?),
            Elementwise::Tanh => Ok(self.tanh(x)),
            Elementwise::Sigmoid => Ok(self.sigmoid(x)),
            Elementwise::Gelu => Ok(self.gelu(x)),
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(name, ta.shape(), tb.shape())?;
        let numel: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let (na, nb) = (da.len(), db.len());
        let out = (0..numel).map(|i| f(da[i % na], db[i % nb])).collect();
        Ok((Tensor::new(shape, out)?, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|v| v * c).collect();
        let t = Tensor::new(t.shape().to_vec(), out).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, c), rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(t.shape().to_vec(), out).unwrap();
        let rg = self.rg(x);
        self.push(t, op, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, kernels::gelu, Op::Gelu(x))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape();
        if axis >= shape.len().max(1) {
            return Err(Error::Index {
                op: "softmax axis",
                index: axis,
                extent: shape.len(),
            });
        }
        let len = shape.get(axis).copied().unwrap_or(1);
        if len == 0 {
            return Err(Error::EmptyAxis);
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape.get(axis + 1..).map_or(1, |s| s.iter().product());
        let mut out = vec![0.0; t.numel()];
        for o in 0..outer {
            for i in 0..inner {
                kernels::softmax_lane(t.data(), &mut out, o * len * inner + i, len, inner);
            }
        }
        let t = Tensor::new(shape.to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(
            t,
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            },
            rg,
        ))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let n = t.cols();
        for p in [gain, bias] {
            if self.value(p).shape() != [n] {
                return Err(shape_err("layer_norm", t.shape(), self.value(p).shape()));
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = t.numel() / n.max(1);
        let mut out = vec![0.0; t.numel()];
        let mut normed = vec![0.0; t.numel()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &t.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                normed[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
            rg,
        ))
    }

    /// Row lookup into a `[V×H]` table.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, h) = matrix_dims(t).ok_or_else(|| shape_err("gather", t.shape(), &[]))?;
        let mut out = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    op: "gather",
                    index: id,
                    extent: v,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), h], out)?;
        let rg = self.rg(table);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = matrix_dims(t).ok_or_else(|| shape_err("slice_cols", t.shape(), &[]))?;
        if start + len > c {
            return Err(Error::Index {
                op: "slice_cols",
                index: start + len,
                extent: c,
            });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let out = Tensor::new(vec![r, len], out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("concat_cols of nothing".into()))?;
        let rows = matrix_dims(self.value(*first))
            .ok_or_else(|| shape_err("concat_cols", self.value(*first).shape(), &[]))?
            .0;
        let mut total = 0;
        for &p in parts {
            match matrix_dims(self.value(p)) {
                Some((r, c)) if r == rows => total += c,
                _ => {
                    return Err(shape_err(
                        "concat_cols",
                        self.value(*first).shape(),
                        self.value(p).shape(),
                    ))
                }
            }
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row `row` of a matrix, as a `[1×c]` matrix.
    pub fn row(&mut self, x: Var, row: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, _) = matrix_dims(t).ok_or_else(|| shape_err("row", t.shape(), &[]))?;
        if row >= r {
            return Err(Error::Index {
                op: "row",
                index: row,
                extent: r,
            });
        }
        let out = Tensor::new(vec![1, t.cols()], t.row(row).to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Row { x, row }, rg))
    }

    /// Stacks `[1×c]` (or `[c]`) rows into an `[n×c]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Config("stack_rows of nothing".into()))?;
        let c = self.value(*first).numel();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            let t = self.value(r);
            if t.numel() != c {
                return Err(shape_err("stack_rows", self.value(*first).shape(), t.shape()));
            }
            out.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows.len(), c], out)?;
        let rg = rows.iter().any(|&r| self.rg(r));
        Ok(self.push(out, Op::StackRows(rows.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel().max(1) as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// `−log softmax(logits)[target]` over a flat logit vector.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        let n = t.numel();
        if target >= n {
            return Err(Error::Index {
                op: "cross_entropy",
                index: target,
                extent: n,
            });
        }
        let lse = kernels::log_sum_exp(t.data());
        let probs: Vec<f64> = t.data().iter().map(|v| (v - lse).exp()).collect();
        let loss = lse - t.data()[target];
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            rg,
        ))
    }

    /// Replaces entries where `keep` is false with `fill`; those entries get no gradient.
    pub fn mask_fill(&mut self, x: Var, keep: &[bool], fill: f64) -> Result<Var> {
        let t = self.value(x);
        if keep.len() != t.numel() {
            return Err(shape_err("mask_fill", t.shape(), &[keep.len()]));
        }
        let out = t
            .data()
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v } else { fill })
            .collect();
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(
            out,
            Op::MaskFill {
                x,
                keep: keep.to_vec(),
            },
            rg,
        ))
    }

    /// Propagates gradients from a scalar `loss` to every node that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot =
                grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        let out = &node.value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                acc(*a, &mut |ga| kernels::matmul_bt_acc(g, tb.data(), ga, m, k, n));
                acc(*b, &mut |gb| kernels::matmul_at_acc(ta.data(), g, gb, m, k, n));
            }
            Op::Transpose(x) => {
                let (r, c) = (out.shape()[1], out.shape()[0]);
                acc(*x, &mut |gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |gv| {
                        let nv = gv.len();
                        for (i, gi) in g.iter().enumerate() {
                            gv[i % nv] += gi;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let (na, nb) = (da.len(), db.len());
                acc(*a, &mut |ga| {
                    for (i, gi) in g.iter().enumerate() {
                        ga[i % na] += gi * db[i % nb];
                    }
                });
                acc(*b, &mut |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % nb] += gi * da[i % na];
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |gx| {
                for (gx, gi) in gx.iter_mut().zip(g) {
                    *gx += gi * c;
                }
            }),
            Op::Tanh(x) => acc(*x, &mut |gx| {
                for ((gx, gi), y) in gx.iter_mut().zip(g).zip(out.data()) {
                    *gx += gi * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => acc(*x, &mut |gx| {
                for ((gx, gi), y) in gx.iter_mut().zip(g).zip(out.data()) {
                    *gx += gi * y * (1.0 - y);
                }
            }),
            Op::Gelu(x) => {
                let xin = nodes[x.0].value.data();
                acc(*x, &mut |gx| {
                    for ((gx, gi), &xv) in gx.iter_mut().zip(g).zip(xin) {
                        *gx += gi * kernels::gelu_grad(xv);
                    }
                });
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                let y = out.data();
                acc(*x, &mut |gx| {
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let base = o * len * inner + i;
                            let dotp: f64 = (0..*len)
                                .map(|l| g[base + l * inner] * y[base + l * inner])
                                .sum();
                            for l in 0..*len {
                                let p = base + l * inner;
                                gx[p] += y[p] * (g[p] - dotp);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let n = out.cols();
                let gn = nodes[gain.0].value.data();
                acc(*x, &mut |gx| {
                    for (r, is) in inv_std.iter().enumerate() {
                        let rs = r * n;
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for c in 0..n {
                            let d = g[rs + c] * gn[c];
                            mean_d += d;
                            mean_dh += d * normed[rs + c];
                        }
                        mean_d /= n as f64;
                        mean_dh /= n as f64;
                        for c in 0..n {
                            let d = g[rs + c] * gn[c];
                            gx[rs + c] += is * (d - mean_d - normed[rs + c] * mean_dh);
                        }
                    }
                });
                acc(*gain, &mut |gg| {
                    for (i, gi) in g.iter().enumerate() {
                        gg[i % n] += gi * normed[i];
                    }
                });
                acc(*bias, &mut |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % n] += gi;
                    }
                });
            }
            Op::Gather { table, ids } => {
                let h = out.cols();
                acc(*table, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..h {
                            gt[id * h + c] += g[r * h + c];
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let (r, len) = (out.shape()[0], out.shape()[1]);
                let c = nodes[x.0].value.cols();
                acc(*x, &mut |gx| {
                    for i in 0..r {
                        for j in 0..len {
                            gx[i * c + start + j] += g[i * len + j];
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = (out.shape()[0], out.shape()[1]);
                let mut offset = 0;
                for &p in parts {
                    let c = nodes[p.0].value.cols();
                    acc(p, &mut |gp| {
                        for r in 0..rows {
                            for j in 0..c {
                                gp[r * c + j] += g[r * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Row { x, row } => {
                let c = out.numel();
                acc(*x, &mut |gx| {
                    for j in 0..c {
                        gx[row * c + j] += g[j];
                    }
                });
            }
            Op::StackRows(rows) => {
                let c = out.cols();
                for (r, &v) in rows.iter().enumerate() {
                    acc(v, &mut |gv| {
                        for j in 0..c {
                            gv[j] += g[r * c + j];
                        }
                    });
                }
            }
            Op::Reshape(x) => acc(*x, &mut |gx| {
                for (gx, gi) in gx.iter_mut().zip(g) {
                    *gx += gi;
                }
            }),
            Op::Sum(x) => acc(*x, &mut |gx| {
                for gx in gx.iter_mut() {
                    *gx += g[0];
                }
            }),
            Op::Mean(x) => acc(*x, &mut |gx| {
                let k = g[0] / gx.len().max(1) as f64;
                for gx in gx.iter_mut() {
                    *gx += k;
                }
            }),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => acc(*logits, &mut |gl| {
                for (i, (gl, p)) in gl.iter_mut().zip(probs).enumerate() {
                    let onehot = if i == *target { 1.0 } else { 0.0 };
                    *gl += g[0] * (p - onehot);
                }
            }),
            Op::MaskFill { x, keep } => acc(*x, &mut |gx| {
                for ((gx, gi), &k) in gx.iter_mut().zip(g).zip(keep) {
                    if k {
                        *gx += gi;
                    }
                }
            }),
        }
    }
}
