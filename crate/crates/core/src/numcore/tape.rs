//! Reverse-mode differentiation over a linear operation record.
//!
//! Nodes are appended in execution order; [`Tape::backward`] replays them in
//! reverse. Gradients reach leaves created with [`Tape::param`] and
//! accumulate across calls until [`Tape::zero_grads`].

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::loss;
use super::ops::{dropout_mask, Ops};
use super::{func, Tensor};
use crate::attention::{kernel as attn_kernel, AttentionMask};
use crate::error::{bail, Result};
use crate::rng::Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f32),
    IdentityMinus(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        xhat: Tensor,
        rstd: Tensor,
        beta: Var,
    },
    Softmax(Var, f32),
    Embedding {
        table: Var,
        ids: Vec<u32>,
    },
    Dropout(Var, Tensor),
    SliceBlock {
        x: Var,
        row0: usize,
        col0: usize,
    },
    Assemble(Vec<(Var, usize, usize)>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: Arc<AttentionMask>,
        scale: f32,
        probs: Tensor,
    },
    SegmentMeans(Var, usize),
    PinvScale {
        a: Var,
        col: usize,
        row: usize,
        col_sum: f32,
        row_sum: f32,
    },
    ScaleBy(Var, Var),
    Sum(Var),
    SoftCrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        targets: Tensor,
        temperature: f32,
    },
    MlmCrossEntropy {
        logits: Var,
        targets: Vec<(usize, u32)>,
    },
    CosineRows(Var, Var),
    WeightedSum(Vec<(f32, Var)>),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    dropout_rng: Option<Rng>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose dropout masks are drawn from `rng`.
    pub fn with_dropout(rng: Rng) -> Self {
        Self {
            nodes: Vec::new(),
            dropout_rng: Some(rng),
        }
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, true, Op::Leaf)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and its buffers.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value_of(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let rg = self.rg(inputs);
        self.push(value, rg, op)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Mean soft-target cross entropy over the logical rows `rows` of
    /// `logits` (trailing axis = classes); `targets` holds one probability row
    /// per entry of `rows`.
    pub fn cross_entropy_soft(
        &mut self,
        logits: Var,
        rows: &[usize],
        targets: Tensor,
        temperature: f32,
    ) -> Result<Var> {
        let vocab = self.val(logits).last_dim();
        let value = loss::soft_ce_rows(
            self.val(logits).data(),
            vocab,
            rows,
            targets.data(),
            temperature,
        )?;
        let op = Op::SoftCrossEntropy {
            logits,
            rows: rows.to_vec(),
            targets,
            temperature,
        };
        Ok(self.record(Tensor::scalar(value), &[logits], op))
    }

    /// Mean NLL at `(row, token)` targets; an empty target list yields a
    /// zero loss that passes no gradient.
    pub fn mlm_cross_entropy(&mut self, logits: Var, targets: &[(usize, u32)]) -> Result<Var> {
        let vocab = self.val(logits).last_dim();
        let value = loss::mlm_rows(self.val(logits).data(), vocab, targets)?;
        let op = Op::MlmCrossEntropy {
            logits,
            targets: targets.to_vec(),
        };
        Ok(self.record(Tensor::scalar(value), &[logits], op))
    }

    /// Mean over rows of `1 − cos(a_r, b_r)`.
    pub fn cosine_embedding_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.val(a).shape() != self.val(b).shape() {
            bail!(Contract, "cosine loss inputs have different shapes");
        }
        let dim = self.val(a).last_dim();
        let value = loss::cosine_rows(self.val(a).data(), self.val(b).data(), dim)?;
        Ok(self.record(Tensor::scalar(value), &[a, b], Op::CosineRows(a, b)))
    }

    /// `Σ wᵢ·xᵢ` over scalar terms, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(f32, Var)]) -> Result<Var> {
        let mut total = 0.0f32;
        for &(w, v) in terms {
            total += w * self.val(v).item()?;
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.1).collect();
        Ok(self.record(Tensor::scalar(total), &inputs, Op::WeightedSum(terms.to_vec())))
    }

    /// Back-propagates from the scalar `loss`, adding into the gradient of
    /// every reachable leaf created with [`Tape::param`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.val(loss).len() != 1 {
            bail!(
                Dimension,
                "backward needs a scalar loss, got shape {:?}",
                self.val(loss).shape()
            );
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(self.val(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.nodes[i].grad {
                    Some(acc) => kernels::add_assign(acc.data_mut(), g.data()),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Vec<f32>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => kernels::add_assign(t.data_mut(), &contrib),
            slot @ None => {
                *slot = Some(Tensor::from_parts(self.val(v).shape().to_vec(), contrib));
            }
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.val(*a).dims2()?;
                let n = self.val(*b).dims2()?.1;
                if self.nodes[a.0].requires_grad {
                    let da = kernels::matmul_nt(gd, self.val(*b).data(), m, n, k);
                    self.acc(grads, *a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let db = kernels::matmul_tn(self.val(*a).data(), gd, m, k, n);
                    self.acc(grads, *b, db);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.val(*a).dims2()?;
                let n = self.val(*b).dims2()?.0;
                if self.nodes[a.0].requires_grad {
                    let da = kernels::matmul(gd, self.val(*b).data(), m, n, k);
                    self.acc(grads, *a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let db = kernels::matmul_tn(gd, self.val(*a).data(), m, n, k);
                    self.acc(grads, *b, db);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.val(*a).dims2()?;
                self.acc(grads, *a, kernels::transpose(gd, c, r));
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gd.to_vec());
                self.acc(grads, *b, gd.to_vec());
            }
            Op::Mul(a, b) => {
                let av = self.val(*a).data();
                let bv = self.val(*b).data();
                self.acc(grads, *a, gd.iter().zip(bv).map(|(g, y)| g * y).collect());
                self.acc(grads, *b, gd.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::AddRow(x, bias) => {
                self.acc(grads, *x, gd.to_vec());
                let d = self.val(*bias).len();
                let mut db = vec![0.0f32; d];
                for row in gd.chunks(d) {
                    kernels::add_assign(&mut db, row);
                }
                self.acc(grads, *bias, db);
            }
            Op::Scale(x, c) => self.acc(grads, *x, gd.iter().map(|g| g * c).collect()),
            Op::IdentityMinus(x) => self.acc(grads, *x, gd.iter().map(|g| -g).collect()),
            Op::Gelu(x) => {
                let xv = self.val(*x).data();
                let dx = gd
                    .iter()
                    .zip(xv)
                    .map(|(g, &v)| g * kernels::gelu_grad(v))
                    .collect();
                self.acc(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = self.val(*gamma).len();
                let (dx, dgamma, dbeta) = kernels::layer_norm_backward(
                    gd,
                    xhat.data(),
                    rstd.data(),
                    self.val(*gamma).data(),
                    d,
                );
                self.acc(grads, *x, dx);
                self.acc(grads, *gamma, dgamma);
                self.acc(grads, *beta, dbeta);
            }
            Op::Softmax(x, scale) => {
                let y = self.nodes[i].value.data();
                let d = self.nodes[i].value.last_dim();
                let mut dx = vec![0.0f32; y.len()];
                for ((yr, gr), dr) in y.chunks(d).zip(gd.chunks(d)).zip(dx.chunks_mut(d)) {
                    let inner = kernels::dot(yr, gr);
                    for c in 0..d {
                        dr[c] = scale * yr[c] * (gr[c] - inner);
                    }
                }
                self.acc(grads, *x, dx);
            }
            Op::Embedding { table, ids } => {
                if self.nodes[table.0].requires_grad {
                    let (v, d) = self.val(*table).dims2()?;
                    let mut dt = vec![0.0f32; v * d];
                    for (r, &id) in ids.iter().enumerate() {
                        let id = id as usize;
                        kernels::add_assign(&mut dt[id * d..(id + 1) * d], &gd[r * d..(r + 1) * d]);
                    }
                    self.acc(grads, *table, dt);
                }
            }
            Op::Dropout(x, mask) => {
                let dx = gd.iter().zip(mask.data()).map(|(g, m)| g * m).collect();
                self.acc(grads, *x, dx);
            }
            Op::SliceBlock { x, row0, col0 } => {
                let (_, c) = self.val(*x).dims2()?;
                let (rows, cols) = g.dims2()?;
                let mut dx = vec![0.0f32; self.val(*x).len()];
                for r in 0..rows {
                    let dst = (row0 + r) * c + col0;
                    dx[dst..dst + cols].copy_from_slice(&gd[r * cols..(r + 1) * cols]);
                }
                self.acc(grads, *x, dx);
            }
            Op::Assemble(parts) => {
                let (_, c) = g.dims2()?;
                for &(p, row0, col0) in parts {
                    if !self.nodes[p.0].requires_grad {
                        continue;
                    }
                    let (pr, pc) = self.val(p).dims2()?;
                    let mut dp = Vec::with_capacity(pr * pc);
                    for r in 0..pr {
                        let src = (row0 + r) * c + col0;
                        dp.extend_from_slice(&gd[src..src + pc]);
                    }
                    self.acc(grads, p, dp);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                mask,
                scale,
                probs,
            } => {
                let d = self.val(*q).last_dim();
                let (dq, dk, dv) = attn_kernel::attend_head_backward(
                    self.val(*q).data(),
                    self.val(*k).data(),
                    self.val(*v).data(),
                    d,
                    mask,
                    *scale,
                    probs.data(),
                    gd,
                );
                self.acc(grads, *q, dq);
                self.acc(grads, *k, dk);
                self.acc(grads, *v, dv);
            }
            Op::SegmentMeans(x, m) => {
                let (n, d) = self.val(*x).dims2()?;
                let mut dx = vec![0.0f32; n * d];
                for s in 0..*m {
                    let (lo, hi) = kernels::segment_bounds(n, *m, s);
                    let inv = 1.0 / (hi - lo) as f32;
                    for r in lo..hi {
                        for c in 0..d {
                            dx[r * d + c] = gd[s * d + c] * inv;
                        }
                    }
                }
                self.acc(grads, *x, dx);
            }
            Op::PinvScale {
                a,
                col,
                row,
                col_sum,
                row_sum,
            } => {
                let s = self.nodes[i].value.data()[0];
                let (r, c) = self.val(*a).dims2()?;
                let av = self.val(*a).data();
                let mut da = vec![0.0f32; r * c];
                for ii in 0..r {
                    for jj in 0..c {
                        let mut w = 0.0f32;
                        if jj == *col {
                            w += 1.0 / col_sum;
                        }
                        if ii == *row {
                            w += 1.0 / row_sum;
                        }
                        if w != 0.0 {
                            let sign = signum(av[ii * c + jj]);
                            da[ii * c + jj] = -gd[0] * s * w * sign;
                        }
                    }
                }
                self.acc(grads, *a, da);
            }
            Op::ScaleBy(x, s) => {
                let sv = self.val(*s).data()[0];
                self.acc(grads, *x, gd.iter().map(|g| g * sv).collect());
                let ds = kernels::dot(gd, self.val(*x).data());
                self.acc(grads, *s, vec![ds]);
            }
            Op::Sum(x) => {
                self.acc(grads, *x, vec![gd[0]; self.val(*x).len()]);
            }
            Op::SoftCrossEntropy {
                logits,
                rows,
                targets,
                temperature,
            } => {
                let z = self.val(*logits);
                let vocab = z.last_dim();
                let mut dz = vec![0.0f32; z.len()];
                let coef = gd[0] / (rows.len() as f32 * temperature);
                let mut q = vec![0.0f32; vocab];
                for (r, &row) in rows.iter().enumerate() {
                    let p = &targets.data()[r * vocab..(r + 1) * vocab];
                    let mass: f32 = p.iter().sum();
                    q.copy_from_slice(&z.data()[row * vocab..(row + 1) * vocab]);
                    kernels::softmax_inplace(&mut q, 1.0 / temperature);
                    let out = &mut dz[row * vocab..(row + 1) * vocab];
                    for c in 0..vocab {
                        out[c] += coef * (q[c] * mass - p[c]);
                    }
                }
                self.acc(grads, *logits, dz);
            }
            Op::MlmCrossEntropy { logits, targets } => {
                if targets.is_empty() {
                    return Ok(());
                }
                let z = self.val(*logits);
                let vocab = z.last_dim();
                let mut dz = vec![0.0f32; z.len()];
                let coef = gd[0] / targets.len() as f32;
                let mut q = vec![0.0f32; vocab];
                for &(row, tok) in targets {
                    q.copy_from_slice(&z.data()[row * vocab..(row + 1) * vocab]);
                    kernels::softmax_inplace(&mut q, 1.0);
                    q[tok as usize] -= 1.0;
                    let out = &mut dz[row * vocab..(row + 1) * vocab];
                    for c in 0..vocab {
                        out[c] += coef * q[c];
                    }
                }
                self.acc(grads, *logits, dz);
            }
            Op::CosineRows(a, b) => {
                let av = self.val(*a).data();
                let bv = self.val(*b).data();
                let dim = self.val(*a).last_dim();
                let rows = av.len() / dim;
                let coef = gd[0] / rows as f32;
                let mut da = vec![0.0f32; av.len()];
                let mut db = vec![0.0f32; bv.len()];
                for r in 0..rows {
                    let span = r * dim..(r + 1) * dim;
                    let (ar, br) = (&av[span.clone()], &bv[span.clone()]);
                    let na = libm::sqrtf(kernels::dot(ar, ar));
                    let nb = libm::sqrtf(kernels::dot(br, br));
                    let cos = kernels::dot(ar, br) / (na * nb);
                    for c in 0..dim {
                        da[span.start + c] = -coef * (br[c] / (na * nb) - cos * ar[c] / (na * na));
                        db[span.start + c] = -coef * (ar[c] / (na * nb) - cos * br[c] / (nb * nb));
                    }
                }
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::WeightedSum(terms) => {
                for &(w, v) in terms {
                    self.acc(grads, v, vec![w * gd[0]]);
                }
            }
        }
        Ok(())
    }
}

fn signum(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Ops for Tape {
    type T = Var;

    fn value<'a>(&'a self, x: &'a Var) -> &'a Tensor {
        self.val(*x)
    }

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, false, Op::Leaf)
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = func::matmul(self.val(*a), self.val(*b))?;
        Ok(self.record(y, &[*a, *b], Op::MatMul(*a, *b)))
    }

    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = func::matmul_nt(self.val(*a), self.val(*b))?;
        Ok(self.record(y, &[*a, *b], Op::MatMulNt(*a, *b)))
    }

    fn transpose(&mut self, a: &Var) -> Result<Var> {
        let y = func::transpose(self.val(*a))?;
        Ok(self.record(y, &[*a], Op::Transpose(*a)))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = func::add(self.val(*a), self.val(*b))?;
        Ok(self.record(y, &[*a, *b], Op::Add(*a, *b)))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = func::mul(self.val(*a), self.val(*b))?;
        Ok(self.record(y, &[*a, *b], Op::Mul(*a, *b)))
    }

    fn add_row(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        let y = func::add_row(self.val(*x), self.val(*bias))?;
        Ok(self.record(y, &[*x, *bias], Op::AddRow(*x, *bias)))
    }

    fn scale(&mut self, x: &Var, c: f32) -> Var {
        let y = func::scale(self.val(*x), c);
        self.record(y, &[*x], Op::Scale(*x, c))
    }

    fn identity_minus(&mut self, x: &Var, c: f32) -> Result<Var> {
        let y = func::identity_minus(self.val(*x), c)?;
        Ok(self.record(y, &[*x], Op::IdentityMinus(*x)))
    }

    fn gelu(&mut self, x: &Var) -> Var {
        let y = func::gelu(self.val(*x));
        self.record(y, &[*x], Op::Gelu(*x))
    }

    fn layer_norm(&mut self, x: &Var, gamma: &Var, beta: &Var) -> Result<Var> {
        let (y, xhat, rstd) = func::layer_norm(self.val(*x), self.val(*gamma), self.val(*beta))?;
        let shape = self.val(*x).shape().to_vec();
        let op = Op::LayerNorm {
            x: *x,
            gamma: *gamma,
            beta: *beta,
            xhat: Tensor::from_parts(shape, xhat),
            rstd: Tensor::vector(rstd),
        };
        Ok(self.record(y, &[*x, *gamma, *beta], op))
    }

    fn softmax(&mut self, x: &Var, scale: f32) -> Var {
        let y = func::softmax(self.val(*x), scale);
        self.record(y, &[*x], Op::Softmax(*x, scale))
    }

    fn embedding(&mut self, table: &Var, ids: &[u32]) -> Result<Var> {
        let y = func::embedding(self.val(*table), ids)?;
        let op = Op::Embedding {
            table: *table,
            ids: ids.to_vec(),
        };
        Ok(self.record(y, &[*table], op))
    }

    fn dropout(&mut self, x: &Var, p: f32) -> Result<Var> {
        let n = self.val(*x).len();
        let Some(rng) = self.dropout_rng.as_mut() else {
            bail!(Protocol, "dropout requested on a tape without a seeded generator");
        };
        let mask = dropout_mask(rng, n, p)?;
        let mask = Tensor::from_parts(self.val(*x).shape().to_vec(), mask);
        let y = func::mul(self.val(*x), &mask)?;
        Ok(self.record(y, &[*x], Op::Dropout(*x, mask)))
    }

    fn slice_block(&mut self, x: &Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let y = func::slice_block(self.val(*x), row0, rows, col0, cols)?;
        Ok(self.record(y, &[*x], Op::SliceBlock { x: *x, row0, col0 }))
    }

    fn assemble(&mut self, shape: [usize; 2], parts: &[(&Var, usize, usize)]) -> Result<Var> {
        let tensors: Vec<(&Tensor, usize, usize)> =
            parts.iter().map(|&(v, r, c)| (self.val(*v), r, c)).collect();
        let y = func::assemble(shape, &tensors)?;
        let owned: Vec<(Var, usize, usize)> = parts.iter().map(|&(v, r, c)| (*v, r, c)).collect();
        let inputs: Vec<Var> = owned.iter().map(|p| p.0).collect();
        Ok(self.record(y, &inputs, Op::Assemble(owned)))
    }

    fn attention(&mut self, q: &Var, k: &Var, v: &Var, mask: &Arc<AttentionMask>, scale: f32) -> Result<Var> {
        let (y, probs) = func::attention(self.val(*q), self.val(*k), self.val(*v), mask, scale)?;
        let op = Op::Attention {
            q: *q,
            k: *k,
            v: *v,
            mask: Arc::clone(mask),
            scale,
            probs,
        };
        Ok(self.record(y, &[*q, *k, *v], op))
    }

    fn segment_means(&mut self, x: &Var, m: usize) -> Result<Var> {
        let y = func::segment_means(self.val(*x), m)?;
        Ok(self.record(y, &[*x], Op::SegmentMeans(*x, m)))
    }

    fn pinv_init_scale(&mut self, a: &Var) -> Result<Var> {
        let (s, col, row) = func::pinv_init_scale(self.val(*a))?;
        let at = self.val(*a);
        let (r, c) = at.dims2()?;
        let col_sum = (0..r).map(|i| at.data()[i * c + col].abs()).sum();
        let row_sum = at.data()[row * c..(row + 1) * c].iter().map(|v| v.abs()).sum();
        let op = Op::PinvScale {
            a: *a,
            col,
            row,
            col_sum,
            row_sum,
        };
        Ok(self.record(s, &[*a], op))
    }

    fn scale_by(&mut self, x: &Var, s: &Var) -> Result<Var> {
        let y = func::scale_by(self.val(*x), self.val(*s))?;
        Ok(self.record(y, &[*x, *s], Op::ScaleBy(*x, *s)))
    }

    fn sum(&mut self, x: &Var) -> Var {
        let y = func::sum(self.val(*x));
        self.record(y, &[*x], Op::Sum(*x))
    }
}
