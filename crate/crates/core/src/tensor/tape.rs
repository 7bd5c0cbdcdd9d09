use rand::Rng;

use super::conv::{conv3d_backward, conv3d_forward};
use super::linalg::{self, Lu};
use super::{Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Neg,
    Exp,
    Log,
    Relu,
    Softplus,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    DownAvg2,
    UpNearest2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Neg,
    Exp,
    Log,
    Relu,
    Softplus,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary { kind: Binary, a: usize, b: usize },
    Unary { kind: Unary, a: usize },
    Scale { a: usize, k: f64 },
    Offset { a: usize },
    Matmul { a: usize, b: usize },
    Transpose { a: usize },
    Conv3d { x: usize, k: usize, stride: usize },
    ChannelBias { x: usize, b: usize },
    Resample { a: usize, mode: Resample },
    Dropout { a: usize, mask: Vec<f64> },
    Cholesky { a: usize },
    MatInv { a: usize },
    LogDet { a: usize },
    TriSolve { l: usize, b: usize, transpose: bool },
    Trace { a: usize },
    Sum { a: usize },
    Mean { a: usize },
    Softmax { a: usize, axis: usize },
    LogSoftmax { a: usize, axis: usize },
    Concat { parts: Vec<usize>, axis: usize },
    Reshape { a: usize },
    Slice { a: usize, axis: usize, start: usize },
    MeanSpatial { a: usize },
    BroadcastSpatial { a: usize },
    LowerTri { diag: usize, off: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run recording of tensor operations.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order of the graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(outer, axis_len, inner)` strides for an axis of a shape.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.shape().len() != rank {
        return Err(TensorError::Invalid(format!(
            "{op}: expected rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn expect_square(op: &'static str, t: &Tensor) -> Result<usize> {
    expect_rank(op, t, 2)?;
    let s = t.shape();
    if s[0] != s[1] {
        return Err(TensorError::Invalid(format!("{op}: matrix not square: {s:?}")));
    }
    Ok(s[0])
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that participates in differentiation.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
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

    // ---- elementwise -------------------------------------------------

    /// Dispatch for the elementwise family. Unary ops ignore `b`.
    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let need_b = || {
            b.ok_or_else(|| TensorError::Invalid(format!("{op:?} needs two operands")))
        };
        match op {
            ElementwiseOp::Add => self.add(a, need_b()?),
            ElementwiseOp::Sub => self.sub(a, need_b()?),
            ElementwiseOp::Mul => self.mul(a, need_b()?),
            ElementwiseOp::Neg => Ok(self.neg(a)),
            ElementwiseOp::Exp => Ok(self.exp(a)),
            ElementwiseOp::Log => self.log(a),
            ElementwiseOp::Relu => Ok(self.relu(a)),
            ElementwiseOp::Softplus => Ok(self.softplus(a)),
            ElementwiseOp::Sigmoid => Ok(self.sigmoid(a)),
        }
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.is_scalar() {
            ta.shape().to_vec()
        } else if ta.is_scalar() {
            tb.shape().to_vec()
        } else {
            return Err(TensorError::ShapeMismatch {
                op: match kind {
                    Binary::Add => "add",
                    Binary::Sub => "sub",
                    Binary::Mul => "mul",
                },
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        };
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let (sa, sb) = (da.len() == 1 && n > 1, db.len() == 1 && n > 1);
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
        };
        let data = (0..n)
            .map(|i| f(da[if sa { 0 } else { i }], db[if sb { 0 } else { i }]))
            .collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Binary { kind, a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Unary::Neg => |x| -x,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
            Unary::Relu => |x| x.max(0.0),
            Unary::Softplus => softplus,
            Unary::Sigmoid => sigmoid,
        };
        let value = self.value(a).map(f);
        self.push(value, Op::Unary { kind, a: a.0 }, &[a.0])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(TensorError::Domain {
                op: "log",
                detail: format!("non-positive argument {bad}"),
            });
        }
        Ok(self.unary(Unary::Log, a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        self.push(value, Op::Scale { a: a.0, k }, &[a.0])
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::Offset { a: a.0 }, &[a.0])
    }

    // ---- matrices ----------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_rank("matmul", ta, 2)?;
        expect_rank("matmul", tb, 2)?;
        let (m, k, k2, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = linalg::matmul(ta.data(), tb.data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(value, Op::Matmul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        expect_rank("transpose", ta, 2)?;
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let value = Tensor::new(vec![n, m], linalg::transpose(ta.data(), m, n))?;
        Ok(self.push(value, Op::Transpose { a: a.0 }, &[a.0]))
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = expect_square("trace", ta)?;
        let t = (0..n).map(|i| ta.data()[i * n + i]).sum();
        Ok(self.push(Tensor::scalar(t), Op::Trace { a: a.0 }, &[a.0]))
    }

    /// Dispatch for the dense linear-algebra family.
    pub fn linalg(&mut self, op: LinalgOp, a: Var) -> Result<Var> {
        match op {
            LinalgOp::MatInv => self.matinv(a),
            LinalgOp::LogDet => self.logdet(a),
            LinalgOp::Cholesky => self.cholesky(a),
        }
    }

    /// Lower Cholesky factor of `½(A + Aᵀ)`.
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = expect_square("cholesky", ta)?;
        let sym = symmetrize(ta.data(), n);
        let l = linalg::cholesky(&sym, n)?;
        let value = Tensor::new(vec![n, n], l)?;
        Ok(self.push(value, Op::Cholesky { a: a.0 }, &[a.0]))
    }

    /// Inverse of an SPD matrix.
    pub fn matinv(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = expect_square("matinv", ta)?;
        linalg::cholesky(ta.data(), n)?;
        let inv = Lu::new(ta.data(), n)?.inverse();
        let value = Tensor::new(vec![n, n], inv)?;
        Ok(self.push(value, Op::MatInv { a: a.0 }, &[a.0]))
    }

    /// `log det A` of an SPD matrix.
    pub fn logdet(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let n = expect_square("logdet", ta)?;
        linalg::cholesky(ta.data(), n)?;
        let (ld, sign) = Lu::new(ta.data(), n)?.log_abs_det();
        if sign < 0.0 {
            return Err(TensorError::Domain {
                op: "logdet",
                detail: "negative determinant".into(),
            });
        }
        Ok(self.push(Tensor::scalar(ld), Op::LogDet { a: a.0 }, &[a.0]))
    }

    /// Solves `L X = B`, or `Lᵀ X = B` when `transpose`, with `L` lower
    /// triangular (`n×n`) and `B` either `n×k` or a length-`n` vector.
    pub fn tri_solve(&mut self, l: Var, b: Var, transpose: bool) -> Result<Var> {
        let (tl, tb) = (self.value(l), self.value(b));
        let n = expect_square("tri_solve", tl)?;
        let k = match tb.shape() {
            [m] if *m == n => 1,
            [m, k] if *m == n => *k,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "tri_solve",
                    left: tl.shape().to_vec(),
                    right: tb.shape().to_vec(),
                })
            }
        };
        let x = linalg::tri_solve(tl.data(), tb.data(), n, k, transpose)?;
        let value = Tensor::new(tb.shape().to_vec(), x)?;
        Ok(self.push(
            value,
            Op::TriSolve {
                l: l.0,
                b: b.0,
                transpose,
            },
            &[l.0, b.0],
        ))
    }

    /// Assembles a lower-triangular `D×D` matrix from its diagonal (`D`)
    /// and strict lower part (`D(D-1)/2`, row-major).
    pub fn lower_tri(&mut self, diag: Var, off: Var) -> Result<Var> {
        let (td, to) = (self.value(diag), self.value(off));
        let d = td.len();
        if td.shape().len() != 1 || to.len() != d * (d - 1) / 2 {
            return Err(TensorError::ShapeMismatch {
                op: "lower_tri",
                left: td.shape().to_vec(),
                right: to.shape().to_vec(),
            });
        }
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = td.data()[i];
            for j in 0..i {
                m[i * d + j] = to.data()[i * (i - 1) / 2 + j];
            }
        }
        let value = Tensor::new(vec![d, d], m)?;
        Ok(self.push(
            value,
            Op::LowerTri {
                diag: diag.0,
                off: off.0,
            },
            &[diag.0, off.0],
        ))
    }

    // ---- volumes -----------------------------------------------------

    /// 3×3×3 convolution with padding 1; `stride` applies to H and W.
    pub fn conv3d(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(k));
        let (out, shape) = conv3d_forward(tx.data(), tx.shape(), tk.data(), tk.shape(), stride)?;
        let value = Tensor::new(shape.to_vec(), out)?;
        Ok(self.push(
            value,
            Op::Conv3d {
                x: x.0,
                k: k.0,
                stride,
            },
            &[x.0, k.0],
        ))
    }

    /// Adds `b[c]` to every element of channel `c` of `x` (`C×…`).
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let c = tx.shape()[0];
        if tb.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "channel_bias",
                left: tx.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let per = tx.len() / c;
        let mut v = tx.clone();
        for (ch, chunk) in v.data_mut().chunks_mut(per).enumerate() {
            let bv = tb.data()[ch];
            chunk.iter_mut().for_each(|e| *e += bv);
        }
        Ok(self.push(v, Op::ChannelBias { x: x.0, b: b.0 }, &[x.0, b.0]))
    }

    /// 2× spatial resampling over the last two axes; leading axes untouched.
    pub fn resample_spatial(&mut self, a: Var, mode: Resample) -> Result<Var> {
        let ta = self.value(a);
        let s = ta.shape();
        if s.len() < 2 {
            return Err(TensorError::Invalid(format!("resample: rank too small {s:?}")));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let planes = ta.len() / (h * w);
        let mut shape = s.to_vec();
        let data = match mode {
            Resample::DownAvg2 => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(TensorError::Invalid(format!(
                        "down_avg2: spatial dims {h}×{w} must be even"
                    )));
                }
                let (ho, wo) = (h / 2, w / 2);
                let mut out = vec![0.0; planes * ho * wo];
                for p in 0..planes {
                    for i in 0..ho {
                        for j in 0..wo {
                            let base = p * h * w;
                            let v = ta.data()[base + 2 * i * w + 2 * j]
                                + ta.data()[base + 2 * i * w + 2 * j + 1]
                                + ta.data()[base + (2 * i + 1) * w + 2 * j]
                                + ta.data()[base + (2 * i + 1) * w + 2 * j + 1];
                            out[(p * ho + i) * wo + j] = 0.25 * v;
                        }
                    }
                }
                *shape.last_mut().unwrap() = wo;
                let r = shape.len() - 2;
                shape[r] = ho;
                out
            }
            Resample::UpNearest2 => {
                let (ho, wo) = (h * 2, w * 2);
                let mut out = vec![0.0; planes * ho * wo];
                for p in 0..planes {
                    for i in 0..ho {
                        for j in 0..wo {
                            out[(p * ho + i) * wo + j] = ta.data()[(p * h + i / 2) * w + j / 2];
                        }
                    }
                }
                *shape.last_mut().unwrap() = wo;
                let r = shape.len() - 2;
                shape[r] = ho;
                out
            }
        };
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Resample { a: a.0, mode }, &[a.0]))
    }

    /// Inverted dropout. With `stochastic == false` this is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        stochastic: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Invalid(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        let n = self.value(a).len();
        let mask: Vec<f64> = if stochastic && rate > 0.0 {
            let keep = 1.0 / (1.0 - rate);
            (0..n)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect()
        } else {
            vec![1.0; n]
        };
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
        Ok(self.push(v, Op::Dropout { a: a.0, mask }, &[a.0]))
    }

    /// Mean over the trailing two axes: `C×D×H×W → C×D`.
    pub fn mean_spatial(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        expect_rank("mean_spatial", ta, 4)?;
        let s = ta.shape();
        let hw = s[2] * s[3];
        let data = ta
            .data()
            .chunks(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        let value = Tensor::new(vec![s[0], s[1]], data)?;
        Ok(self.push(value, Op::MeanSpatial { a: a.0 }, &[a.0]))
    }

    /// Repeats each entry of a `C×D` tensor over an `h×w` grid.
    pub fn broadcast_spatial(&mut self, a: Var, h: usize, w: usize) -> Result<Var> {
        let ta = self.value(a);
        expect_rank("broadcast_spatial", ta, 2)?;
        let s = ta.shape().to_vec();
        let data = ta
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, h * w))
            .collect();
        let value = Tensor::new(vec![s[0], s[1], h, w], data)?;
        Ok(self.push(value, Op::BroadcastSpatial { a: a.0 }, &[a.0]))
    }

    // ---- reductions and rearrangement ----------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum { a: a.0 }, &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean { a: a.0 }, &[a.0])
    }

    /// Softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(a, axis, false)
    }

    /// Log-softmax along `axis`, computed without forming the probabilities.
    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(a, axis, true)
    }

    fn softmax_impl(&mut self, a: Var, axis: usize, log: bool) -> Result<Var> {
        let ta = self.value(a);
        if axis >= ta.shape().len() {
            return Err(TensorError::Invalid(format!(
                "softmax: axis {axis} out of range for {:?}",
                ta.shape()
            )));
        }
        let (outer, len, inner) = split_axis(ta.shape(), axis);
        let mut out = ta.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |c: usize| (o * len + c) * inner + i;
                let max = (0..len).map(|c| out[idx(c)]).fold(f64::NEG_INFINITY, f64::max);
                if log {
                    let z: f64 = (0..len).map(|c| (out[idx(c)] - max).exp()).sum();
                    let lse = max + z.ln();
                    for c in 0..len {
                        out[idx(c)] -= lse;
                    }
                    continue;
                }
                let mut z = 0.0;
                for c in 0..len {
                    let e = (out[idx(c)] - max).exp();
                    out[idx(c)] = e;
                    z += e;
                }
                for c in 0..len {
                    out[idx(c)] /= z;
                }
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        let op = if log {
            Op::LogSoftmax { a: a.0, axis }
        } else {
            Op::Softmax { a: a.0, axis }
        };
        Ok(self.push(value, op, &[a.0]))
    }

    pub fn softmax_lastdim(&mut self, a: Var) -> Result<Var> {
        let axis = self.shape(a).len() - 1;
        self.softmax(a, axis)
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Invalid(format!("concat: bad axis {axis}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: base.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let len = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
        }
        let value = Tensor::new(shape, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(
            value,
            Op::Concat {
                parts: idx.clone(),
                axis,
            },
            &idx,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, Op::Reshape { a: a.0 }, &[a.0]))
    }

    /// Sub-range `start..start+len` of `axis`.
    pub fn slice_index(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let s = ta.shape();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(TensorError::Invalid(format!(
                "slice_index: range {start}..{} on axis {axis} of {s:?}",
                start + len
            )));
        }
        let (outer, alen, inner) = split_axis(s, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * alen + start) * inner;
            data.extend_from_slice(&ta.data()[from..from + len * inner]);
        }
        let mut shape = s.to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Slice { a: a.0, axis, start }, &[a.0]))
    }

    // ---- backward ----------------------------------------------------

    /// Reverse sweep from a scalar root. Gradients are then available via
    /// [`Tape::grad`]. A second call without [`Tape::reset_grads`] errors.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        // Every requires_grad leaf reachable from the root gets a gradient;
        // unreached ones get zeros so shapes are always present.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.value(v).shape().to_vec(), g.clone()).expect("grad shape"))
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let needs = |j: usize| self.nodes[j].requires_grad;
        let mut acc = |j: usize, contrib: Vec<f64>| {
            if !self.nodes[j].requires_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, a, b } => {
                let (ta, tb) = (val(*a), val(*b));
                let n = g.len();
                let reduce = |v: Vec<f64>, t: &Tensor| {
                    if t.len() == 1 && n > 1 {
                        vec![v.iter().sum()]
                    } else {
                        v
                    }
                };
                let at = |t: &Tensor, k: usize| t.data()[if t.len() == 1 { 0 } else { k }];
                let (ga, gb): (Vec<f64>, Vec<f64>) = match kind {
                    Binary::Add => (g.to_vec(), g.to_vec()),
                    Binary::Sub => (g.to_vec(), g.iter().map(|x| -x).collect()),
                    Binary::Mul => (
                        (0..n).map(|k| g[k] * at(tb, k)).collect(),
                        (0..n).map(|k| g[k] * at(ta, k)).collect(),
                    ),
                };
                if needs(*a) {
                    acc(*a, reduce(ga, ta));
                }
                if needs(*b) {
                    acc(*b, reduce(gb, tb));
                }
            }
            Op::Unary { kind, a } => {
                let x = val(*a).data();
                let y = node.value.data();
                let gi: Vec<f64> = match kind {
                    Unary::Neg => g.iter().map(|v| -v).collect(),
                    Unary::Exp => g.iter().zip(y).map(|(g, y)| g * y).collect(),
                    Unary::Log => g.iter().zip(x).map(|(g, x)| g / x).collect(),
                    Unary::Relu => g
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect(),
                    Unary::Softplus => g.iter().zip(x).map(|(g, &x)| g * sigmoid(x)).collect(),
                    Unary::Sigmoid => g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                };
                acc(*a, gi);
            }
            Op::Scale { a, k } => acc(*a, g.iter().map(|v| k * v).collect()),
            Op::Offset { a } => acc(*a, g.to_vec()),
            Op::Matmul { a, b } => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if needs(*a) {
                    let bt = linalg::transpose(tb.data(), k, n);
                    acc(*a, linalg::matmul(g, &bt, m, n, k));
                }
                if needs(*b) {
                    let at = linalg::transpose(ta.data(), m, k);
                    acc(*b, linalg::matmul(&at, g, k, m, n));
                }
            }
            Op::Transpose { a } => {
                let s = node.value.shape();
                acc(*a, linalg::transpose(g, s[0], s[1]));
            }
            Op::Trace { a } => {
                let n = val(*a).shape()[0];
                let mut gi = vec![0.0; n * n];
                for d in 0..n {
                    gi[d * n + d] = g[0];
                }
                acc(*a, gi);
            }
            Op::Cholesky { a } => {
                let l = node.value.data();
                let n = node.value.shape()[0];
                acc(*a, cholesky_adjoint(l, g, n)?);
            }
            Op::MatInv { a } => {
                // Ā = -Yᵀ G Yᵀ
                let n = node.value.shape()[0];
                let yt = linalg::transpose(node.value.data(), n, n);
                let t = linalg::matmul(&yt, g, n, n, n);
                let r = linalg::matmul(&t, &yt, n, n, n);
                acc(*a, r.into_iter().map(|v| -v).collect());
            }
            Op::LogDet { a } => {
                let n = val(*a).shape()[0];
                let inv = Lu::new(val(*a).data(), n)?.inverse();
                let invt = linalg::transpose(&inv, n, n);
                acc(*a, invt.into_iter().map(|v| g[0] * v).collect());
            }
            Op::TriSolve { l, b, transpose } => {
                let tl = val(*l);
                let n = tl.shape()[0];
                let k = g.len() / n;
                let x = node.value.data();
                // b̄ solves the transposed system; L̄ is the outer product
                // restricted to the lower triangle.
                let gb = linalg::tri_solve(tl.data(), g, n, k, !transpose)?;
                if needs(*l) {
                    let mut gl = vec![0.0; n * n];
                    for r in 0..n {
                        for c in 0..=r {
                            let mut s = 0.0;
                            for col in 0..k {
                                s += if *transpose {
                                    x[r * k + col] * gb[c * k + col]
                                } else {
                                    gb[r * k + col] * x[c * k + col]
                                };
                            }
                            gl[r * n + c] = -s;
                        }
                    }
                    acc(*l, gl);
                }
                if needs(*b) {
                    acc(*b, gb);
                }
            }
            Op::LowerTri { diag, off } => {
                let d = node.value.shape()[0];
                if needs(*diag) {
                    acc(*diag, (0..d).map(|i| g[i * d + i]).collect());
                }
                if needs(*off) {
                    let mut go = vec![0.0; d * (d - 1) / 2];
                    for i in 0..d {
                        for j in 0..i {
                            go[i * (i - 1) / 2 + j] = g[i * d + j];
                        }
                    }
                    acc(*off, go);
                }
            }
            Op::Conv3d { x, k, stride } => {
                let (tx, tk) = (val(*x), val(*k));
                let (gx, gk) =
                    conv3d_backward(tx.data(), tx.shape(), tk.data(), tk.shape(), *stride, g)?;
                if needs(*x) {
                    acc(*x, gx);
                }
                if needs(*k) {
                    acc(*k, gk);
                }
            }
            Op::ChannelBias { x, b } => {
                let c = val(*b).len();
                let per = g.len() / c;
                if needs(*b) {
                    acc(*b, g.chunks(per).map(|ch| ch.iter().sum()).collect());
                }
                if needs(*x) {
                    acc(*x, g.to_vec());
                }
            }
            Op::Resample { a, mode } => {
                let s = val(*a).shape();
                let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
                let planes = val(*a).len() / (h * w);
                let mut gi = vec![0.0; planes * h * w];
                match mode {
                    Resample::DownAvg2 => {
                        let (ho, wo) = (h / 2, w / 2);
                        for p in 0..planes {
                            for i in 0..h {
                                for j in 0..w {
                                    gi[(p * h + i) * w + j] =
                                        0.25 * g[(p * ho + i / 2) * wo + j / 2];
                                }
                            }
                        }
                    }
                    Resample::UpNearest2 => {
                        let (ho, wo) = (h * 2, w * 2);
                        for p in 0..planes {
                            for i in 0..ho {
                                for j in 0..wo {
                                    gi[(p * h + i / 2) * w + j / 2] += g[(p * ho + i) * wo + j];
                                }
                            }
                        }
                    }
                }
                acc(*a, gi);
            }
            Op::Dropout { a, mask } => acc(*a, g.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::Sum { a } => acc(*a, vec![g[0]; val(*a).len()]),
            Op::Mean { a } => {
                let n = val(*a).len();
                acc(*a, vec![g[0] / n as f64; n]);
            }
            Op::Softmax { a, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                let mut gi = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |c: usize| (o * len + c) * inner + i;
                        let dot: f64 = (0..len).map(|c| g[idx(c)] * y[idx(c)]).sum();
                        for c in 0..len {
                            gi[idx(c)] = y[idx(c)] * (g[idx(c)] - dot);
                        }
                    }
                }
                acc(*a, gi);
            }
            Op::LogSoftmax { a, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                let mut gi = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |c: usize| (o * len + c) * inner + i;
                        let total: f64 = (0..len).map(|c| g[idx(c)]).sum();
                        for c in 0..len {
                            gi[idx(c)] = g[idx(c)] - y[idx(c)].exp() * total;
                        }
                    }
                }
                acc(*a, gi);
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).shape()[*axis];
                    if needs(p) {
                        let mut gp = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let from = (o * total + offset) * inner;
                            gp.extend_from_slice(&g[from..from + len * inner]);
                        }
                        acc(p, gp);
                    }
                    offset += len;
                }
            }
            Op::Reshape { a } => acc(*a, g.to_vec()),
            Op::Slice { a, axis, start } => {
                let s = val(*a).shape();
                let (outer, alen, inner) = split_axis(s, *axis);
                let len = node.value.shape()[*axis];
                let mut gi = vec![0.0; val(*a).len()];
                for o in 0..outer {
                    let to = (o * alen + start) * inner;
                    let from = o * len * inner;
                    gi[to..to + len * inner].copy_from_slice(&g[from..from + len * inner]);
                }
                acc(*a, gi);
            }
            Op::MeanSpatial { a } => {
                let s = val(*a).shape();
                let hw = s[2] * s[3];
                let gi = g
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v / hw as f64, hw))
                    .collect();
                acc(*a, gi);
            }
            Op::BroadcastSpatial { a } => {
                let s = node.value.shape();
                let hw = s[2] * s[3];
                acc(*a, g.chunks(hw).map(|c| c.iter().sum()).collect());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinalgOp {
    MatInv,
    LogDet,
    Cholesky,
}

fn symmetrize(a: &[f64], n: usize) -> Vec<f64> {
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    s
}

/// Adjoint of `L = chol(½(A + Aᵀ))`:
/// `S = L⁻ᵀ Φ(Lᵀ L̄) L⁻¹`, `Ā = ½(S + Sᵀ)`, where `Φ` keeps the lower
/// triangle and halves the diagonal.
fn cholesky_adjoint(l: &[f64], gl: &[f64], n: usize) -> Result<Vec<f64>> {
    let lt = linalg::transpose(l, n, n);
    let mut p = linalg::matmul(&lt, gl, n, n, n);
    for i in 0..n {
        for j in 0..n {
            if j > i {
                p[i * n + j] = 0.0;
            } else if j == i {
                p[i * n + j] *= 0.5;
            }
        }
    }
    // Y = L⁻ᵀ P, then S = Y L⁻¹ = (L⁻ᵀ Yᵀ)ᵀ
    let y = linalg::tri_solve(l, &p, n, n, true)?;
    let yt = linalg::transpose(&y, n, n);
    let st = linalg::tri_solve(l, &yt, n, n, true)?;
    let s = linalg::transpose(&st, n, n);
    Ok((0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            0.5 * (s[i * n + j] + s[j * n + i])
        })
        .collect())
}
