//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node whose inputs are earlier nodes, so the
//! recorded graph is acyclic by construction. [`Tape::backward`] walks the
//! tape in reverse from a scalar loss.

use std::sync::Arc;

use super::gemm::{gemm, Operand};
use super::{MaskMatrix, NumericsError, Tensor};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_COEF: f64 = 0.044715;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Square { a: Var },
    Gelu { a: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, normed: Vec<f64>, inv_std: Vec<f64> },
    SoftmaxRows { a: Var },
    Attention(Box<AttentionCache>),
    Reshape { a: Var },
    SliceRows { a: Var, start: usize },
    ConcatRows { parts: Vec<Var> },
    Sum { a: Var },
    Mean { a: Var },
}

#[derive(Debug)]
struct AttentionCache {
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    scale: f64,
    /// Post-softmax weights, `heads × rows_q × rows_k`, before dropout.
    weights: Vec<f64>,
    /// Inverted-dropout multipliers matching `weights`.
    dropout: Option<Vec<f64>>,
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Post-softmax weights recorded by one [`Tape::attention`] call.
#[derive(Clone, Copy, Debug)]
pub struct AttentionRecord<'a> {
    pub output: Var,
    pub heads: usize,
    pub rows_q: usize,
    pub rows_k: usize,
    /// `heads × rows_q × rows_k`, before dropout.
    pub weights: &'a [f64],
}

impl AttentionRecord<'_> {
    pub fn weight(&self, head: usize, row: usize, col: usize) -> f64 {
        self.weights[(head * self.rows_q + row) * self.rows_k + col]
    }
}

/// Records a computation for later differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the node does not require gradients or is unreachable from
    /// the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEF * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let t = (c * (x + GELU_COEF * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEF * x * x)
}

/// Row-wise softmax of `logits + mask`; blocked entries come out exactly 0.
pub(crate) fn masked_softmax_row(logits: &mut [f64], blocked: Option<&[bool]>) {
    let open = |j: usize| blocked.map_or(true, |b| !b[j]);
    let max = (0..logits.len())
        .filter(|&j| open(j))
        .map(|j| logits[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, x) in logits.iter_mut().enumerate() {
        if open(j) {
            *x = (*x - max).exp();
            total += *x;
        } else {
            *x = 0.0;
        }
    }
    for x in logits.iter_mut() {
        *x /= total;
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Every attention call recorded at or after node `from`, in order.
    pub fn attention_records(&self, from: usize) -> impl Iterator<Item = AttentionRecord<'_>> {
        self.nodes.iter().enumerate().skip(from).filter_map(|(i, node)| match &node.op {
            Op::Attention(cache) => Some(AttentionRecord {
                output: Var(i),
                heads: cache.heads,
                rows_q: node.value.rows(),
                rows_k: self.nodes[cache.k.0].value.rows(),
                weights: &cache.weights,
            }),
            _ => None,
        })
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: impl Into<Arc<Tensor>>) -> Var {
        self.nodes.push(Node {
            value: value.into(),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, value: impl Into<Arc<Tensor>>) -> Var {
        self.nodes.push(Node {
            value: value.into(),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies the current value of `var` into a new constant leaf.
    pub fn detach(&mut self, var: Var) -> Var {
        let value = Arc::clone(&self.nodes[var.0].value);
        self.constant(value)
    }

    /// `a · b` for `a: n×k`, `b: k×m`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k || tb.shape().len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            Operand::row_major(ta.data(), k),
            Operand::row_major(tb.data(), m),
            &mut out,
            m,
            false,
        );
        let value = Tensor::from_rows(n, m, out)?;
        Ok(self.push(value, Op::MatMul { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("add", ta, tb)?;
        let mut value = ta.clone();
        value.add_assign(tb);
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("sub", ta, tb)?;
        let mut value = ta.clone();
        for (x, y) in value.data_mut().iter_mut().zip(tb.data()) {
            *x -= y;
        }
        Ok(self.push(value, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("mul", ta, tb)?;
        let mut value = ta.clone();
        for (x, y) in value.data_mut().iter_mut().zip(tb.data()) {
            *x *= y;
        }
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    /// Adds a length-`cols` bias to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let cols = ta.cols();
        if tb.len() != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut value = ta.clone();
        for row in value.data_mut().chunks_mut(cols) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        Ok(self.push(value, Op::AddRow { a, bias }, &[a, bias]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale { a, factor }, &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square { a }, &[a])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        self.push(value, Op::Gelu { a }, &[a])
    }

    /// Normalizes each row to zero mean and unit variance, then applies the
    /// affine `gamma`, `beta` (both of length `cols`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, NumericsError> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let cols = tx.cols();
        if tg.len() != cols || tb.len() != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "layer_norm",
                lhs: tx.shape().to_vec(),
                rhs: tg.shape().to_vec(),
            });
        }
        let rows = tx.rows();
        let mut normed = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.len());
        for row in tx.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for (j, v) in row.iter().enumerate() {
                let n = (v - mean) * inv;
                normed.push(n);
                out.push(n * tg.data()[j] + tb.data()[j]);
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let cols = value.cols();
        for row in value.data_mut().chunks_mut(cols) {
            masked_softmax_row(row, None);
        }
        self.push(value, Op::SoftmaxRows { a }, &[a])
    }

    /// Multi-head scaled dot-product attention over already-projected inputs.
    ///
    /// `q: rows_q × d`, `k, v: rows_k × d`. Per head of width `d / heads`,
    /// computes `softmax(q_h k_hᵀ / √(d/heads) + mask) v_h` and concatenates the
    /// heads along columns. `dropout`, when given, holds inverted-dropout
    /// multipliers of length `heads · rows_q · rows_k` applied to the weights.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: Option<&MaskMatrix>,
        heads: usize,
        dropout: Option<Vec<f64>>,
    ) -> Result<Var, NumericsError> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        let (rq, rk) = (tq.rows(), tk.rows());
        if heads == 0 || d % heads != 0 {
            return Err(NumericsError::Heads { dim: d, heads });
        }
        if tk.cols() != d || tv.cols() != d || tv.rows() != rk {
            return Err(NumericsError::ShapeMismatch {
                op: "attention",
                lhs: tq.shape().to_vec(),
                rhs: tk.shape().to_vec(),
            });
        }
        if let Some(m) = mask {
            if m.size() != rq || m.size() != rk {
                return Err(NumericsError::ShapeMismatch {
                    op: "attention mask",
                    lhs: vec![rq, rk],
                    rhs: vec![m.size(), m.size()],
                });
            }
        }
        if let Some(drop) = &dropout {
            if drop.len() != heads * rq * rk {
                return Err(NumericsError::DataLength {
                    shape: vec![heads, rq, rk],
                    len: drop.len(),
                });
            }
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = vec![0.0; heads * rq * rk];
        let mut out = vec![0.0; rq * d];
        let mut effective = vec![0.0; rq * rk];
        for h in 0..heads {
            let w = &mut weights[h * rq * rk..(h + 1) * rq * rk];
            gemm(
                rq,
                dh,
                rk,
                Operand::strided(&tq.data()[h * dh..], d as isize, 1),
                Operand::strided(&tk.data()[h * dh..], 1, d as isize),
                w,
                rk,
                false,
            );
            for (i, row) in w.chunks_mut(rk).enumerate() {
                for x in row.iter_mut() {
                    *x *= scale;
                }
                masked_softmax_row(row, mask.map(|m| m.row_blocked(i)));
            }
            let applied: &[f64] = match &dropout {
                Some(drop) => {
                    for ((e, a), m) in effective
                        .iter_mut()
                        .zip(w.iter())
                        .zip(&drop[h * rq * rk..(h + 1) * rq * rk])
                    {
                        *e = a * m;
                    }
                    &effective
                }
                None => w,
            };
            gemm(
                rq,
                rk,
                dh,
                Operand::row_major(applied, rk),
                Operand::strided(&tv.data()[h * dh..], d as isize, 1),
                &mut out[h * dh..],
                d,
                false,
            );
        }
        let value = Tensor::from_rows(rq, d, out)?;
        let cache = AttentionCache {
            q,
            k,
            v,
            heads,
            scale,
            weights,
            dropout,
        };
        Ok(self.push(value, Op::Attention(Box::new(cache)), &[q, k, v]))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, NumericsError> {
        let value = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { a }, &[a]))
    }

    /// Rows `start .. start + count` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var, NumericsError> {
        let ta = self.value(a);
        let cols = ta.cols();
        if count == 0 || start + count > ta.rows() {
            return Err(NumericsError::SliceOutOfRange {
                start,
                count,
                rows: ta.rows(),
            });
        }
        let data = ta.data()[start * cols..(start + count) * cols].to_vec();
        let value = Tensor::from_rows(count, cols, data)?;
        Ok(self.push(value, Op::SliceRows { a, start }, &[a]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::Empty("concat_rows"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_rows(rows, cols, data)?;
        Ok(self.push(
            value,
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
            parts,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum { a }, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(value, Op::Mean { a }, &[a])
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(NumericsError::NonScalarLoss(root.value.shape().to_vec()));
        }
        self.check_acyclic(loss)?;
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if root.requires_grad {
            grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn check_acyclic(&self, loss: Var) -> Result<(), NumericsError> {
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if self.inputs(&node.op).iter().any(|v| v.0 >= i) {
                return Err(NumericsError::CyclicGraph(i));
            }
        }
        Ok(())
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                vec![*a, *b]
            }
            Op::AddRow { a, bias } => vec![*a, *bias],
            Op::Scale { a, .. }
            | Op::Square { a }
            | Op::Gelu { a }
            | Op::SoftmaxRows { a }
            | Op::Reshape { a }
            | Op::SliceRows { a, .. }
            | Op::Sum { a }
            | Op::Mean { a } => vec![*a],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Attention(c) => vec![c.q, c.k, c.v],
            Op::ConcatRows { parts } => parts.clone(),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), NumericsError> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; n * k];
                    gemm(
                        n,
                        m,
                        k,
                        Operand::row_major(g.data(), m),
                        Operand::strided(tb.data(), 1, m as isize),
                        &mut da,
                        k,
                        false,
                    );
                    self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), da)?);
                }
                if self.needs(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * m];
                    gemm(
                        k,
                        n,
                        m,
                        Operand::strided(ta.data(), 1, k as isize),
                        Operand::row_major(g.data(), m),
                        &mut db,
                        m,
                        false,
                    );
                    self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), db)?);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let mut da = g.clone();
                    da.data_mut().iter_mut().zip(tb.data()).for_each(|(x, y)| *x *= y);
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = g.clone();
                    db.data_mut().iter_mut().zip(ta.data()).for_each(|(x, y)| *x *= y);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::AddRow { a, bias } => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*bias) {
                    let tb = self.value(*bias);
                    let cols = tb.len();
                    let mut db = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (acc, x) in db.iter_mut().zip(row) {
                            *acc += x;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(tb.shape().to_vec(), db)?);
                }
            }
            Op::Scale { a, factor } => self.accumulate(grads, *a, g.map(|x| x * factor)),
            Op::Square { a } => {
                let mut da = g.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(self.value(*a).data())
                    .for_each(|(d, x)| *d *= 2.0 * x);
                self.accumulate(grads, *a, da);
            }
            Op::Gelu { a } => {
                let mut da = g.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(self.value(*a).data())
                    .for_each(|(d, x)| *d *= gelu_grad(*x));
                self.accumulate(grads, *a, da);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                inv_std,
            } => {
                let tx = self.value(*x);
                let tg = self.value(*gamma);
                let cols = tx.cols();
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    for (grow, nrow) in g.data().chunks(cols).zip(normed.chunks(cols)) {
                        for j in 0..cols {
                            dg[j] += grow[j] * nrow[j];
                            db[j] += grow[j];
                        }
                    }
                    self.accumulate(grads, *gamma, Tensor::new(tg.shape().to_vec(), dg)?);
                    let beta_shape = self.value(*beta).shape().to_vec();
                    self.accumulate(grads, *beta, Tensor::new(beta_shape, db)?);
                }
                if self.needs(*x) {
                    let n = cols as f64;
                    let mut dx = Vec::with_capacity(tx.len());
                    let mut dn = vec![0.0; cols];
                    for ((grow, nrow), inv) in g.data().chunks(cols).zip(normed.chunks(cols)).zip(inv_std) {
                        let mut sum_dn = 0.0;
                        let mut sum_dn_n = 0.0;
                        for j in 0..cols {
                            dn[j] = grow[j] * tg.data()[j];
                            sum_dn += dn[j];
                            sum_dn_n += dn[j] * nrow[j];
                        }
                        for j in 0..cols {
                            dx.push(inv / n * (n * dn[j] - sum_dn - nrow[j] * sum_dn_n));
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(tx.shape().to_vec(), dx)?);
                }
            }
            Op::SoftmaxRows { a } => {
                let y = &node.value;
                let cols = y.cols();
                let mut da = Vec::with_capacity(y.len());
                for (grow, yrow) in g.data().chunks(cols).zip(y.data().chunks(cols)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    da.extend(grow.iter().zip(yrow).map(|(gi, yi)| yi * (gi - dot)));
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), da)?);
            }
            Op::Attention(cache) => self.attention_backward(cache, g, grads)?,
            Op::Reshape { a } => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.clone().reshaped(shape)?);
            }
            Op::SliceRows { a, start } => {
                if self.needs(*a) {
                    let ta = self.value(*a);
                    let cols = ta.cols();
                    let mut da = Tensor::zeros(ta.shape());
                    da.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                    self.accumulate(grads, *a, da);
                }
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let len = tp.len();
                    if self.needs(p) {
                        let gp = Tensor::new(tp.shape().to_vec(), g.data()[offset..offset + len].to_vec())?;
                        self.accumulate(grads, p, gp);
                    }
                    offset += len;
                }
            }
            Op::Sum { a } => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(&shape, g.data()[0]));
            }
            Op::Mean { a } => {
                let ta = self.value(*a);
                let v = g.data()[0] / ta.len() as f64;
                self.accumulate(grads, *a, Tensor::full(ta.shape(), v));
            }
        }
        Ok(())
    }

    fn attention_backward(
        &self,
        c: &AttentionCache,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), NumericsError> {
        let (tq, tk, tv) = (self.value(c.q), self.value(c.k), self.value(c.v));
        let d = tq.cols();
        let (rq, rk) = (tq.rows(), tk.rows());
        let dh = d / c.heads;
        let mut dq = vec![0.0; rq * d];
        let mut dk = vec![0.0; rk * d];
        let mut dv = vec![0.0; rk * d];
        let mut effective = vec![0.0; rq * rk];
        let mut dw = vec![0.0; rq * rk];
        for h in 0..c.heads {
            let w = &c.weights[h * rq * rk..(h + 1) * rq * rk];
            let drop = c.dropout.as_ref().map(|dr| &dr[h * rq * rk..(h + 1) * rq * rk]);
            let applied: &[f64] = match drop {
                Some(m) => {
                    for ((e, a), s) in effective.iter_mut().zip(w).zip(m) {
                        *e = a * s;
                    }
                    &effective
                }
                None => w,
            };
            let g_h = Operand::strided(&g.data()[h * dh..], d as isize, 1);
            // dV_h = Aᵀ · G_h
            gemm(
                rk,
                rq,
                dh,
                Operand::strided(applied, 1, rk as isize),
                g_h,
                &mut dv[h * dh..],
                d,
                false,
            );
            // dA = G_h · V_hᵀ
            gemm(
                rq,
                dh,
                rk,
                g_h,
                Operand::strided(&tv.data()[h * dh..], 1, d as isize),
                &mut dw,
                rk,
                false,
            );
            if let Some(m) = drop {
                dw.iter_mut().zip(m).for_each(|(x, s)| *x *= s);
            }
            // dS = W ⊙ (dA − rowsum(dA ⊙ W)), folded with the logit scale.
            for (drow, wrow) in dw.chunks_mut(rk).zip(w.chunks(rk)) {
                let dot: f64 = drow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                for (x, wv) in drow.iter_mut().zip(wrow) {
                    *x = wv * (*x - dot) * c.scale;
                }
            }
            // dQ_h = dS · K_h ; dK_h = dSᵀ · Q_h
            gemm(
                rq,
                rk,
                dh,
                Operand::row_major(&dw, rk),
                Operand::strided(&tk.data()[h * dh..], d as isize, 1),
                &mut dq[h * dh..],
                d,
                false,
            );
            gemm(
                rk,
                rq,
                dh,
                Operand::strided(&dw, 1, rk as isize),
                Operand::strided(&tq.data()[h * dh..], d as isize, 1),
                &mut dk[h * dh..],
                d,
                false,
            );
        }
        if self.needs(c.q) {
            self.accumulate(grads, c.q, Tensor::from_rows(rq, d, dq)?);
        }
        if self.needs(c.k) {
            self.accumulate(grads, c.k, Tensor::from_rows(rk, d, dk)?);
        }
        if self.needs(c.v) {
            self.accumulate(grads, c.v, Tensor::from_rows(rk, d, dv)?);
        }
        Ok(())
    }
}
