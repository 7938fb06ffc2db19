use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::Tensor;

/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logs in
/// binary cross-entropy; sigmoid saturates numerically even though the math
/// keeps it inside (0, 1).
pub const BCE_EPS: f64 = 1e-7;

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NormP {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    AddBias,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Abs,
    Square,
    Neg,
    Scale(f64),
    Sum,
    Mean,
    MeanAxis0,
    Norm(NormP),
    RowNorm(NormP),
    Bce,
    ConcatCols,
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    out: Tensor,
}

/// Wengert list: an ordered record of primitive operations. Every input of a
/// recorded op was produced earlier on the same tape or is a leaf, so one
/// reverse sweep visits each node exactly once, summing adjoints wherever a
/// value fans out.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Node index for `t`, registering it as a leaf on first sight.
    fn node_of(&self, t: &Tensor) -> usize {
        if let Some((tape_id, idx)) = t.node_get() {
            if tape_id == self.id {
                return idx;
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            out: t.clone(),
        });
        t.node_set(self.id, idx);
        idx
    }

    fn push(
        &self,
        op: Op,
        op_name: &'static str,
        inputs: Vec<usize>,
        shape: &[usize],
        data: Vec<f64>,
    ) -> Result<Tensor> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let out = Tensor::new(shape, data)?;
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        out.node_set(self.id, idx);
        nodes.push(Node {
            op,
            inputs,
            out: out.clone(),
        });
        Ok(out)
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// `a [m×k] · b [k×n] → [m×n]`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::DimMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let data = matmul_raw(&a.data(), &b.data(), m, k, n);
        let (ia, ib) = (self.node_of(a), self.node_of(b));
        self.push(Op::MatMul, "matmul", vec![ia, ib], &[m, n], data)
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(Op::Add, "add", a, b, |x, y| x + y)
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(Op::Sub, "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(Op::Mul, "mul", a, b, |x, y| x * y)
    }

    /// Elementwise with exact-shape or single-element (scalar) broadcast.
    fn binary(
        &self,
        op: Op,
        name: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ad, bd) = (a.data(), b.data());
        let (data, shape): (Vec<f64>, Vec<usize>) = if a.shape() == b.shape() {
            (
                ad.iter().zip(bd.iter()).map(|(&x, &y)| f(x, y)).collect(),
                a.shape().to_vec(),
            )
        } else if b.numel() == 1 {
            let s = bd[0];
            (ad.iter().map(|&x| f(x, s)).collect(), a.shape().to_vec())
        } else if a.numel() == 1 {
            let s = ad[0];
            (bd.iter().map(|&y| f(s, y)).collect(), b.shape().to_vec())
        } else {
            return Err(Error::DimMismatch {
                op: name,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        };
        drop(ad);
        drop(bd);
        let (ia, ib) = (self.node_of(a), self.node_of(b));
        self.push(op, name, vec![ia, ib], &shape, data)
    }

    /// `x [m×n] + bias [n]`, broadcast over rows.
    pub fn add_bias(&self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || bias.numel() != x.shape()[1] {
            return Err(Error::DimMismatch {
                op: "add_bias",
                lhs: x.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let (m, n) = (x.shape()[0], x.shape()[1]);
        let xd = x.data();
        let bd = bias.data();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(xd[i * n + j] + bd[j]);
            }
        }
        drop(xd);
        drop(bd);
        let (ix, ib) = (self.node_of(x), self.node_of(bias));
        self.push(Op::AddBias, "add_bias", vec![ix, ib], &[m, n], data)
    }

    fn unary(
        &self,
        op: Op,
        name: &'static str,
        x: &Tensor,
        f: impl Fn(f64) -> f64,
    ) -> Result<Tensor> {
        let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
        let ix = self.node_of(x);
        let shape = x.shape().to_vec();
        self.push(op, name, vec![ix], &shape, data)
    }

    pub fn relu(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(Op::Relu, "relu", x, |v| v.max(0.0))
    }

    pub fn leaky_relu(&self, x: &Tensor, alpha: f64) -> Result<Tensor> {
        self.unary(Op::LeakyRelu(alpha), "leaky_relu", x, |v| {
            if v > 0.0 {
                v
            } else {
                alpha * v
            }
        })
    }

    pub fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(Op::Sigmoid, "sigmoid", x, |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn tanh(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(Op::Tanh, "tanh", x, |v| v.tanh())
    }

    pub fn abs(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(Op::Abs, "abs", x, |v| v.abs())
    }

    pub fn square(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(Op::Square, "square", x, |v| v * v)
    }

    pub fn neg(&self, x: &Tensor) -> Result<Tensor> {
        self.unary(Op::Neg, "neg", x, |v| -v)
    }

    /// Multiply by a compile-time constant (loss weights and the like).
    pub fn scale(&self, x: &Tensor, c: f64) -> Result<Tensor> {
        self.unary(Op::Scale(c), "scale", x, |v| c * v)
    }

    /// Sum of all entries, in ascending index order.
    pub fn sum(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.data().iter().sum();
        let ix = self.node_of(x);
        self.push(Op::Sum, "sum", vec![ix], &[1], vec![s])
    }

    pub fn mean(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.numel() as f64;
        let s: f64 = x.data().iter().sum();
        let ix = self.node_of(x);
        self.push(Op::Mean, "mean", vec![ix], &[1], vec![s / n])
    }

    /// Column means of a matrix: `[m×n] → [1×n]`.
    pub fn mean_axis0(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 {
            return Err(Error::DimMismatch {
                op: "mean_axis0",
                lhs: x.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (m, n) = (x.shape()[0], x.shape()[1]);
        let xd = x.data();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += xd[i * n + j];
            }
        }
        for v in out.iter_mut() {
            *v /= m as f64;
        }
        drop(xd);
        let ix = self.node_of(x);
        self.push(Op::MeanAxis0, "mean_axis0", vec![ix], &[1, n], out)
    }

    /// Whole-tensor p-norm. `p = 1` sums absolute values; `p = 2` is the
    /// Euclidean norm with the subgradient at zero defined as zero.
    pub fn norm(&self, x: &Tensor, p: u8) -> Result<Tensor> {
        let kind = norm_p(p)?;
        let val = match kind {
            NormP::L1 => x.data().iter().map(|v| v.abs()).sum(),
            NormP::L2 => x.data().iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        let ix = self.node_of(x);
        self.push(Op::Norm(kind), "norm", vec![ix], &[1], vec![val])
    }

    /// Per-row p-norms of a matrix: `[m×n] → [m]`.
    pub fn row_norm(&self, x: &Tensor, p: u8) -> Result<Tensor> {
        let kind = norm_p(p)?;
        if x.shape().len() != 2 {
            return Err(Error::DimMismatch {
                op: "row_norm",
                lhs: x.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (m, n) = (x.shape()[0], x.shape()[1]);
        let xd = x.data();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            out.push(match kind {
                NormP::L1 => row.iter().map(|v| v.abs()).sum(),
                NormP::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            });
        }
        drop(xd);
        let ix = self.node_of(x);
        self.push(Op::RowNorm(kind), "row_norm", vec![ix], &[m], out)
    }

    /// Mean binary cross-entropy `−[t·log p + (1−t)·log(1−p)]` with
    /// predictions clamped to `[BCE_EPS, 1−BCE_EPS]`. Targets are treated as
    /// constants: no adjoint flows into them.
    pub fn bce(&self, prediction: &Tensor, target: &Tensor) -> Result<Tensor> {
        if prediction.shape() != target.shape() {
            return Err(Error::DimMismatch {
                op: "bce",
                lhs: prediction.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let pd = prediction.data();
        let td = target.data();
        let n = pd.len() as f64;
        let mut acc = 0.0;
        for (&p, &t) in pd.iter().zip(td.iter()) {
            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            acc -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        }
        drop(pd);
        drop(td);
        let (ip, it) = (self.node_of(prediction), self.node_of(target));
        self.push(Op::Bce, "bce", vec![ip, it], &[1], vec![acc / n])
    }

    /// Horizontal concatenation: `[m×a] ++ [m×b] → [m×(a+b)]`.
    pub fn concat_cols(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[0] != b.shape()[0] {
            return Err(Error::DimMismatch {
                op: "concat_cols",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let ad = a.data();
        let bd = b.data();
        let mut data = Vec::with_capacity(m * (ca + cb));
        for i in 0..m {
            data.extend_from_slice(&ad[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&bd[i * cb..(i + 1) * cb]);
        }
        drop(ad);
        drop(bd);
        let (ia, ib) = (self.node_of(a), self.node_of(b));
        self.push(
            Op::ConcatCols,
            "concat_cols",
            vec![ia, ib],
            &[m, ca + cb],
            data,
        )
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss recorded on this tape. Every
    /// `requires_grad` leaf reachable from the loss gets its gradient
    /// populated; repeated calls accumulate.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let loss_idx = match loss.node_get() {
            Some((tape_id, idx)) if tape_id == self.id => idx,
            _ => {
                return Err(Error::contract(
                    "backward: loss was not produced on this tape",
                ))
            }
        };
        if !loss.item().is_finite() {
            return Err(Error::NonFinite { op: "backward" });
        }

        let nodes = self.nodes.borrow();
        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        adjoints[loss_idx] = Some(vec![1.0]);

        // Reverse creation order is a reverse topological order.
        for i in (0..=loss_idx).rev() {
            let adj = match adjoints[i].take() {
                Some(a) => a,
                None => continue,
            };
            let node = &nodes[i];
            match node.op {
                Op::Leaf => {
                    if node.out.requires_grad() {
                        if adj.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFinite { op: "backward" });
                        }
                        node.out.accumulate_grad(&adj);
                    }
                    continue;
                }
                _ => self.propagate(node, &adj, &nodes, &mut adjoints),
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, adj: &[f64], nodes: &[Node], adjoints: &mut [Option<Vec<f64>>]) {
        let mut send = |idx: usize, delta: Vec<f64>| {
            let slot = &mut adjoints[idx];
            match slot {
                Some(acc) => {
                    for (a, d) in acc.iter_mut().zip(&delta) {
                        *a += d;
                    }
                }
                None => *slot = Some(delta),
            }
        };

        match node.op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::MatMul => {
                let a = &nodes[node.inputs[0]].out;
                let b = &nodes[node.inputs[1]].out;
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                // dA = dC·Bᵀ ; dB = Aᵀ·dC
                let bd = b.data();
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let dc = adj[i * n + j];
                        if dc != 0.0 {
                            for p in 0..k {
                                da[i * k + p] += dc * bd[p * n + j];
                            }
                        }
                    }
                }
                drop(bd);
                let ad = a.data();
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = ad[i * k + p];
                        if av != 0.0 {
                            for j in 0..n {
                                db[p * n + j] += av * adj[i * n + j];
                            }
                        }
                    }
                }
                drop(ad);
                send(node.inputs[0], da);
                send(node.inputs[1], db);
            }
            Op::Add | Op::Sub => {
                let a = &nodes[node.inputs[0]].out;
                let b = &nodes[node.inputs[1]].out;
                let sign = if matches!(node.op, Op::Sub) { -1.0 } else { 1.0 };
                send(node.inputs[0], reduce_to(adj, a.numel()));
                let mut db = reduce_to(adj, b.numel());
                if sign < 0.0 {
                    for v in db.iter_mut() {
                        *v = -*v;
                    }
                }
                send(node.inputs[1], db);
            }
            Op::Mul => {
                let a = &nodes[node.inputs[0]].out;
                let b = &nodes[node.inputs[1]].out;
                let ad = a.data();
                let bd = b.data();
                let da: Vec<f64> = if b.numel() == 1 && a.numel() != 1 {
                    adj.iter().map(|&g| g * bd[0]).collect()
                } else if a.numel() == 1 && b.numel() != 1 {
                    vec![adj.iter().zip(bd.iter()).map(|(&g, &y)| g * y).sum()]
                } else {
                    adj.iter().zip(bd.iter()).map(|(&g, &y)| g * y).collect()
                };
                let db: Vec<f64> = if a.numel() == 1 && b.numel() != 1 {
                    adj.iter().map(|&g| g * ad[0]).collect()
                } else if b.numel() == 1 && a.numel() != 1 {
                    vec![adj.iter().zip(ad.iter()).map(|(&g, &x)| g * x).sum()]
                } else {
                    adj.iter().zip(ad.iter()).map(|(&g, &x)| g * x).collect()
                };
                drop(ad);
                drop(bd);
                send(node.inputs[0], da);
                send(node.inputs[1], db);
            }
            Op::AddBias => {
                let bias = &nodes[node.inputs[1]].out;
                let n = bias.numel();
                let m = adj.len() / n;
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += adj[i * n + j];
                    }
                }
                send(node.inputs[0], adj.to_vec());
                send(node.inputs[1], db);
            }
            Op::Relu => {
                let x = nodes[node.inputs[0]].out.data();
                let dx = adj
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                drop(x);
                send(node.inputs[0], dx);
            }
            Op::LeakyRelu(alpha) => {
                let x = nodes[node.inputs[0]].out.data();
                let dx = adj
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &v)| if v > 0.0 { g } else { alpha * g })
                    .collect();
                drop(x);
                send(node.inputs[0], dx);
            }
            Op::Sigmoid => {
                let y = node.out.data();
                let dx = adj
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &s)| g * s * (1.0 - s))
                    .collect();
                drop(y);
                send(node.inputs[0], dx);
            }
            Op::Tanh => {
                let y = node.out.data();
                let dx = adj
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &t)| g * (1.0 - t * t))
                    .collect();
                drop(y);
                send(node.inputs[0], dx);
            }
            Op::Abs => {
                let x = nodes[node.inputs[0]].out.data();
                let dx = adj
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &v)| g * sign0(v))
                    .collect();
                drop(x);
                send(node.inputs[0], dx);
            }
            Op::Square => {
                let x = nodes[node.inputs[0]].out.data();
                let dx = adj
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &v)| g * 2.0 * v)
                    .collect();
                drop(x);
                send(node.inputs[0], dx);
            }
            Op::Neg => {
                send(node.inputs[0], adj.iter().map(|&g| -g).collect());
            }
            Op::Scale(c) => {
                send(node.inputs[0], adj.iter().map(|&g| c * g).collect());
            }
            Op::Sum => {
                let n = nodes[node.inputs[0]].out.numel();
                send(node.inputs[0], vec![adj[0]; n]);
            }
            Op::Mean => {
                let n = nodes[node.inputs[0]].out.numel();
                send(node.inputs[0], vec![adj[0] / n as f64; n]);
            }
            Op::MeanAxis0 => {
                let x = &nodes[node.inputs[0]].out;
                let (m, n) = (x.shape()[0], x.shape()[1]);
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        dx[i * n + j] = adj[j] / m as f64;
                    }
                }
                send(node.inputs[0], dx);
            }
            Op::Norm(kind) => {
                let x = nodes[node.inputs[0]].out.data();
                let g = adj[0];
                let dx = match kind {
                    NormP::L1 => x.iter().map(|&v| g * sign0(v)).collect(),
                    NormP::L2 => {
                        let y = node.out.item();
                        if y == 0.0 {
                            vec![0.0; x.len()]
                        } else {
                            x.iter().map(|&v| g * v / y).collect()
                        }
                    }
                };
                drop(x);
                send(node.inputs[0], dx);
            }
            Op::RowNorm(kind) => {
                let x = &nodes[node.inputs[0]].out;
                let (m, n) = (x.shape()[0], x.shape()[1]);
                let xd = x.data();
                let yd = node.out.data();
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let g = adj[i];
                    for j in 0..n {
                        let v = xd[i * n + j];
                        dx[i * n + j] = match kind {
                            NormP::L1 => g * sign0(v),
                            NormP::L2 => {
                                if yd[i] == 0.0 {
                                    0.0
                                } else {
                                    g * v / yd[i]
                                }
                            }
                        };
                    }
                }
                drop(xd);
                drop(yd);
                send(node.inputs[0], dx);
            }
            Op::Bce => {
                let p = nodes[node.inputs[0]].out.data();
                let t = nodes[node.inputs[1]].out.data();
                let n = p.len() as f64;
                let g = adj[0];
                let dp = p
                    .iter()
                    .zip(t.iter())
                    .map(|(&pv, &tv)| {
                        let pc = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
                        g * (pc - tv) / (pc * (1.0 - pc) * n)
                    })
                    .collect();
                drop(p);
                drop(t);
                send(node.inputs[0], dp);
                // targets are constants
            }
            Op::ConcatCols => {
                let a = &nodes[node.inputs[0]].out;
                let b = &nodes[node.inputs[1]].out;
                let (m, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let mut da = vec![0.0; m * ca];
                let mut db = vec![0.0; m * cb];
                for i in 0..m {
                    let row = &adj[i * (ca + cb)..(i + 1) * (ca + cb)];
                    da[i * ca..(i + 1) * ca].copy_from_slice(&row[..ca]);
                    db[i * cb..(i + 1) * cb].copy_from_slice(&row[ca..]);
                }
                send(node.inputs[0], da);
                send(node.inputs[1], db);
            }
        }
    }
}

fn norm_p(p: u8) -> Result<NormP> {
    match p {
        1 => Ok(NormP::L1),
        2 => Ok(NormP::L2),
        _ => Err(Error::contract(format!("norm: p must be 1 or 2, got {p}"))),
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Collapse an adjoint to a scalar operand by summing, or pass it through
/// when shapes already agree.
fn reduce_to(adj: &[f64], numel: usize) -> Vec<f64> {
    if numel == 1 && adj.len() != 1 {
        vec![adj.iter().sum()]
    } else {
        adj.to_vec()
    }
}

/// Plain `m×k · k×n` with a fixed i-p-j loop order so summation order (and
/// therefore every result bit) is reproducible.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}
