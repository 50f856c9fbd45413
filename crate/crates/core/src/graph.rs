//! Dynamic reverse-mode tape.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each recorded op appends one
//! node holding its output value and whatever it needs for the backward pass;
//! node ids are assigned in creation order, so the node list is already a
//! topological order and [`Graph::backward`] is a single reverse sweep.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom, SynapseGrads};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Elementwise operations exposed through [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Div,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    ClampMin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bin {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Un {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Neg,
    Abs,
    Softplus,
    Square,
    ClampMin(f64),
    Scale(f64),
    Shift(f64),
}

/// How the right operand of a binary op maps onto the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// `[R, C] ∘ [C]` (or `[1, C]`): bias-style, indexed by column.
    Row(usize),
    /// `[R, C] ∘ [R, 1]`: one value per row.
    Col(usize),
}

impl Bcast {
    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Row(c) => i % c,
            Bcast::Col(c) => i / c,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary { kind: Bin, a: Var, b: Var, bcast: Bcast },
    Unary { kind: Un, x: Var },
    MatMul { a: Var, b: Var },
    Sum { x: Var },
    Reshape { x: Var },
    SliceCols { x: Var, start: usize },
    ConcatCols { parts: Vec<Var> },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Synapse { pre: Var, slope: Var, offset: Var, weight: Var, reversal: Var },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// Accumulated gradients of leaves, indexed by node id.
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records `t` as a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// A leaf that never receives gradients (inputs, targets).
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Invalid(format!(
                "constant of shape {shape:?} given {} values",
                data.len()
            )));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Snapshot of a node as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    // ---- elementwise ------------------------------------------------------

    pub fn elementwise(&mut self, op: ElemOp, a: Var, b: Option<Var>) -> Result<Var> {
        let bin = match op {
            ElemOp::Add => Some(Bin::Add),
            ElemOp::Sub => Some(Bin::Sub),
            ElemOp::Mul => Some(Bin::Mul),
            ElemOp::Div => Some(Bin::Div),
            _ => None,
        };
        if let Some(kind) = bin {
            let b = b.ok_or_else(|| Error::Invalid(format!("{op:?} needs two operands")))?;
            return self.binary(kind, a, b);
        }
        if b.is_some() {
            return Err(Error::Invalid(format!("{op:?} takes one operand")));
        }
        let un = match op {
            ElemOp::Relu => Un::Relu,
            ElemOp::Sigmoid => Un::Sigmoid,
            ElemOp::Tanh => Un::Tanh,
            ElemOp::Exp => Un::Exp,
            ElemOp::Log => Un::Log,
            ElemOp::ClampMin(m) => Un::ClampMin(m),
            _ => unreachable!(),
        };
        Ok(self.unary(un, a))
    }

    fn broadcast_of(&self, a: Var, b: Var, op: &'static str) -> Result<Bcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let nb: usize = sb.iter().product();
        if sa == sb {
            return Ok(Bcast::Same);
        }
        if nb == 1 {
            return Ok(Bcast::Scalar);
        }
        if let Some(&cols) = sa.last() {
            let rows: usize = sa[..sa.len() - 1].iter().product();
            let row_like = sb == [cols] || sb == [1, cols];
            if row_like && sa.len() >= 2 {
                return Ok(Bcast::Row(cols));
            }
            if sa.len() == 2 && sb == [rows, 1] {
                return Ok(Bcast::Col(cols));
            }
        }
        Err(Error::Shape {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    fn binary(&mut self, kind: Bin, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Bin::Add => "add",
            Bin::Sub => "sub",
            Bin::Mul => "mul",
            Bin::Div => "div",
        };
        let bcast = self.broadcast_of(a, b, name)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value: Vec<f64> = va
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = vb[bcast.index(i)];
                match kind {
                    Bin::Add => x + y,
                    Bin::Sub => x - y,
                    Bin::Mul => x * y,
                    Bin::Div => x / y,
                }
            })
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, value, Op::Binary { kind, a, b, bcast }, rg))
    }

    fn unary(&mut self, kind: Un, x: Var) -> Var {
        let f: fn(f64, f64) -> f64 = match kind {
            Un::Relu => |v, _| v.max(0.0),
            Un::Sigmoid => |v, _| kernels::sigmoid(v),
            Un::Tanh => |v, _| v.tanh(),
            Un::Exp => |v, _| v.exp(),
            Un::Log => |v, _| v.ln(),
            Un::Neg => |v, _| -v,
            Un::Abs => |v, _| v.abs(),
            Un::Softplus => |v, _| kernels::softplus(v),
            Un::Square => |v, _| v * v,
            Un::ClampMin(_) => |v, m| v.max(m),
            Un::Scale(_) => |v, k| v * k,
            Un::Shift(_) => |v, k| v + k,
        };
        let k = match kind {
            Un::ClampMin(k) | Un::Scale(k) | Un::Shift(k) => k,
            _ => 0.0,
        };
        let value = self.value(x).iter().map(|&v| f(v, k)).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, value, Op::Unary { kind, x }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Bin::Add, a, b)
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Bin::Sub, a, b)
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Bin::Mul, a, b)
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Bin::Div, a, b)
    }
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Un::Relu, x)
    }
    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Un::Sigmoid, x)
    }
    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Un::Tanh, x)
    }
    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Un::Exp, x)
    }
    pub fn log(&mut self, x: Var) -> Var {
        self.unary(Un::Log, x)
    }
    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(Un::Neg, x)
    }
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Un::Abs, x)
    }
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(Un::Softplus, x)
    }
    pub fn square(&mut self, x: Var) -> Var {
        self.unary(Un::Square, x)
    }
    pub fn clamp_min(&mut self, x: Var, min: f64) -> Var {
        self.unary(Un::ClampMin(min), x)
    }
    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(Un::Scale(k), x)
    }
    pub fn shift(&mut self, x: Var, k: f64) -> Var {
        self.unary(Un::Shift(k), x)
    }

    // ---- linear algebra and reductions ----------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (r, k, c) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; r * c];
        kernels::matmul_nn(r, k, c, self.value(a), self.value(b), &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![r, c], out, Op::MatMul { a, b }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), value, Op::Reshape { x }, rg))
    }

    /// Columns `start..start+len` of a 2-D node.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || start + len > s[1] {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: s.to_vec(),
                rhs: vec![start, len],
            });
        }
        let (r, c) = (s[0], s[1]);
        let v = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for row in 0..r {
            out.extend_from_slice(&v[row * c + start..row * c + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![r, len], out, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p)[0])
            .ok_or_else(|| Error::Invalid("concat of zero parts".into()))?;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            total += s[1];
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![rows, total], out, Op::ConcatCols { parts: parts.to_vec() }, rg))
    }

    // ---- network ops -------------------------------------------------------

    /// Cross-correlation of `x: [B, Cin, H, W]` with `w: [Cout, Cin, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sb != [sw[0]] {
            return Err(Error::Shape {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        if stride == 0 || sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[3] {
            return Err(Error::Shape {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let geom = ConvGeom {
            in_c: sx[1],
            in_h: sx[2],
            in_w: sx[3],
            out_c: sw[0],
            kh: sw[2],
            kw: sw[3],
            stride,
            pad,
        };
        let batch = sx[0];
        let out = kernels::conv2d_forward(&geom, batch, self.value(x), self.value(w), self.value(b));
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            vec![batch, geom.out_c, geom.out_h(), geom.out_w()],
            out,
            Op::Conv2d { x, w, b, geom },
            rg,
        ))
    }

    /// 2×2 max pooling, stride 2, on `[B, C, H, W]`.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::Shape {
                op: "max_pool2",
                lhs: s,
                rhs: vec![2, 2],
            });
        }
        let (out, argmax) = kernels::maxpool2_forward(s[0], s[1], s[2], s[3], self.value(x));
        let rg = self.rg(x);
        Ok(self.push(vec![s[0], s[1], s[2] / 2, s[3] / 2], out, Op::MaxPool2 { x, argmax }, rg))
    }

    /// Per-sample layer normalisation of `[B, C, ...]` with per-channel affine.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || self.shape(gamma) != [s[1]] || self.shape(beta) != [s[1]] {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: s,
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let (y, xhat, inv_std) =
            kernels::layer_norm_forward(s[0], s[1], self.value(x), self.value(gamma), self.value(beta));
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            s,
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Sigmoid-gated synapse sums, see [`kernels::synapse_forward`].
    /// `pre: [B, p]`, parameters `[p, q]`, output `[B, 2q]`.
    pub fn synapse(&mut self, pre: Var, slope: Var, offset: Var, weight: Var, reversal: Var) -> Result<Var> {
        let sp = self.shape(pre).to_vec();
        let sq = self.shape(slope).to_vec();
        let ok = sp.len() == 2
            && sq.len() == 2
            && sq[0] == sp[1]
            && [offset, weight, reversal].iter().all(|&v| self.shape(v) == sq.as_slice());
        if !ok {
            return Err(Error::Shape {
                op: "synapse",
                lhs: sp,
                rhs: sq,
            });
        }
        let (b, p, q) = (sp[0], sp[1], sq[1]);
        let out = kernels::synapse_forward(
            b,
            p,
            q,
            self.value(pre),
            self.value(slope),
            self.value(offset),
            self.value(weight),
            self.value(reversal),
        );
        let rg = [pre, slope, offset, weight, reversal].iter().any(|&v| self.rg(v));
        Ok(self.push(
            vec![b, 2 * q],
            out,
            Op::Synapse {
                pre,
                slope,
                offset,
                weight,
                reversal,
            },
            rg,
        ))
    }

    // ---- backward ------------------------------------------------------------

    /// Back-propagates from a scalar `loss`. Leaf gradients accumulate across
    /// calls until the graph is dropped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let Graph { nodes, leaf_grads } = self;
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let rg = |v: Var| nodes[v.0].requires_grad;
            let val = |v: Var| nodes[v.0].value.as_slice();
            match &node.op {
                Op::Leaf => acc(&mut leaf_grads[id], g),
                Op::Binary { kind, a, b, bcast } => {
                    let (va, vb) = (val(*a), val(*b));
                    if rg(*a) {
                        let ga: Vec<f64> = match kind {
                            Bin::Add | Bin::Sub => g.clone(),
                            Bin::Mul => g.iter().enumerate().map(|(i, gi)| gi * vb[bcast.index(i)]).collect(),
                            Bin::Div => g.iter().enumerate().map(|(i, gi)| gi / vb[bcast.index(i)]).collect(),
                        };
                        acc(&mut grads[a.0], ga);
                    }
                    if rg(*b) {
                        let mut gb = vec![0.0; vb.len()];
                        for (i, gi) in g.iter().enumerate() {
                            let j = bcast.index(i);
                            gb[j] += match kind {
                                Bin::Add => *gi,
                                Bin::Sub => -gi,
                                Bin::Mul => gi * va[i],
                                Bin::Div => -gi * va[i] / (vb[j] * vb[j]),
                            };
                        }
                        acc(&mut grads[b.0], gb);
                    }
                }
                Op::Unary { kind, x } => {
                    let (xv, y) = (val(*x), node.value.as_slice());
                    let gx: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| {
                            gi * match *kind {
                                Un::Relu => f64::from(u8::from(xv[i] > 0.0)),
                                Un::Sigmoid => y[i] * (1.0 - y[i]),
                                Un::Tanh => 1.0 - y[i] * y[i],
                                Un::Exp => y[i],
                                Un::Log => 1.0 / xv[i],
                                Un::Neg => -1.0,
                                Un::Abs => xv[i].signum() * f64::from(u8::from(xv[i] != 0.0)),
                                Un::Softplus => kernels::sigmoid(xv[i]),
                                Un::Square => 2.0 * xv[i],
                                Un::ClampMin(m) => f64::from(u8::from(xv[i] > m)),
                                Un::Scale(k) => k,
                                Un::Shift(_) => 1.0,
                            }
                        })
                        .collect();
                    acc(&mut grads[x.0], gx);
                }
                Op::MatMul { a, b } => {
                    let (r, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                    let c = nodes[b.0].shape[1];
                    if rg(*a) {
                        let mut ga = vec![0.0; r * k];
                        kernels::matmul_nt(r, c, k, &g, val(*b), &mut ga, 0.0);
                        acc(&mut grads[a.0], ga);
                    }
                    if rg(*b) {
                        let mut gb = vec![0.0; k * c];
                        kernels::matmul_tn(k, r, c, val(*a), &g, &mut gb, 0.0);
                        acc(&mut grads[b.0], gb);
                    }
                }
                Op::Sum { x } => {
                    let n = nodes[x.0].value.len();
                    acc(&mut grads[x.0], vec![g[0]; n]);
                }
                Op::Reshape { x } => acc(&mut grads[x.0], g),
                Op::SliceCols { x, start } => {
                    let (r, c) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
                    let len = node.shape[1];
                    let mut gx = vec![0.0; r * c];
                    for row in 0..r {
                        gx[row * c + start..row * c + start + len].copy_from_slice(&g[row * len..(row + 1) * len]);
                    }
                    acc(&mut grads[x.0], gx);
                }
                Op::ConcatCols { parts } => {
                    let rows = node.shape[0];
                    let total = node.shape[1];
                    let mut off = 0;
                    for &p in parts {
                        let c = nodes[p.0].shape[1];
                        if rg(p) {
                            let mut gp = Vec::with_capacity(rows * c);
                            for r in 0..rows {
                                gp.extend_from_slice(&g[r * total + off..r * total + off + c]);
                            }
                            acc(&mut grads[p.0], gp);
                        }
                        off += c;
                    }
                }
                Op::Conv2d { x, w, b, geom } => {
                    let batch = nodes[x.0].shape[0];
                    let (dx, dw, db) = kernels::conv2d_backward(geom, batch, val(*x), val(*w), &g, rg(*x));
                    if let Some(dx) = dx {
                        acc(&mut grads[x.0], dx);
                    }
                    if rg(*w) {
                        acc(&mut grads[w.0], dw);
                    }
                    if rg(*b) {
                        acc(&mut grads[b.0], db);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut gx = vec![0.0; nodes[x.0].value.len()];
                    for (gi, &src) in g.iter().zip(argmax) {
                        gx[src] += gi;
                    }
                    acc(&mut grads[x.0], gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let s = &nodes[x.0].shape;
                    let (dx, dgamma, dbeta) = kernels::layer_norm_backward(s[0], s[1], xhat, inv_std, val(*gamma), &g);
                    if rg(*x) {
                        acc(&mut grads[x.0], dx);
                    }
                    if rg(*gamma) {
                        acc(&mut grads[gamma.0], dgamma);
                    }
                    if rg(*beta) {
                        acc(&mut grads[beta.0], dbeta);
                    }
                }
                Op::Synapse {
                    pre,
                    slope,
                    offset,
                    weight,
                    reversal,
                } => {
                    let (b, p) = (nodes[pre.0].shape[0], nodes[pre.0].shape[1]);
                    let q = nodes[slope.0].shape[1];
                    let SynapseGrads {
                        pre: gp,
                        slope: gs,
                        offset: go,
                        weight: gw,
                        reversal: ga,
                    } = kernels::synapse_backward(
                        b,
                        p,
                        q,
                        val(*pre),
                        val(*slope),
                        val(*offset),
                        val(*weight),
                        val(*reversal),
                        &g,
                    );
                    for (v, gv) in [(*pre, gp), (*slope, gs), (*offset, go), (*weight, gw), (*reversal, ga)] {
                        if rg(v) {
                            acc(&mut grads[v.0], gv);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn acc(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(buf) => buf.iter_mut().zip(&g).for_each(|(b, v)| *b += v),
        None => *slot = Some(g),
    }
}
