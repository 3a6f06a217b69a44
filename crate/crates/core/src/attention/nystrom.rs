//! Landmark approximation of softmax attention.
//!
//! Landmarks are means of contiguous row segments of Q and K. The output is
//! `softmax(sQK̃ᵀ) · pinv(softmax(sQ̃K̃ᵀ)) · softmax(sQ̃Kᵀ) · V`, evaluated
//! right to left so no `n×n` matrix is ever formed.

use alloc::vec::Vec;

use super::{heads, stack_heads};
use crate::error::{bail, Result};
use crate::numcore::{Eager, Ops, Tensor};

/// Newton-type pseudoinverse iteration
/// `Z ← ¼·Z·(13I − AZ·(15I − AZ·(7I − AZ)))` from `Z₀ = Aᵀ/(‖A‖₁‖A‖∞)`.
pub fn pinv<O: Ops>(ops: &mut O, a: &O::T, iters: usize) -> Result<O::T> {
    if iters == 0 {
        bail!(Parameter, "pseudoinverse needs at least one iteration");
    }
    let s = ops.pinv_init_scale(a)?;
    let at = ops.transpose(a)?;
    let mut z = ops.scale_by(&at, &s)?;
    for _ in 0..iters {
        let az = ops.matmul(a, &z)?;
        let inner = ops.identity_minus(&az, 7.0)?;
        let t = ops.matmul(&az, &inner)?;
        let mid = ops.identity_minus(&t, 15.0)?;
        let t = ops.matmul(&az, &mid)?;
        let outer = ops.identity_minus(&t, 13.0)?;
        let t = ops.matmul(&z, &outer)?;
        z = ops.scale(&t, 0.25);
        if !ops.value(&z).is_finite() {
            bail!(Numeric, "pseudoinverse iteration diverged");
        }
    }
    Ok(z)
}

pub fn iterative_pinv(a: &Tensor, iters: usize) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if r != c {
        bail!(Dimension, "pseudoinverse iteration needs a square matrix, got {r}×{c}");
    }
    pinv(&mut Eager::new(), a, iters)
}

/// One head of landmark attention on `[n×d]` inputs.
pub fn nystrom<O: Ops>(
    ops: &mut O,
    q: &O::T,
    k: &O::T,
    v: &O::T,
    landmarks: usize,
    iters: usize,
    scale: f32,
) -> Result<O::T> {
    let (n, _) = ops.value(q).dims2()?;
    if landmarks == 0 || landmarks > n {
        bail!(Parameter, "{landmarks} landmarks for sequence length {n}");
    }
    let q_land = ops.segment_means(q, landmarks)?;
    let k_land = ops.segment_means(k, landmarks)?;
    let kernel = {
        let s = ops.matmul_nt(&q_land, &k_land)?;
        ops.softmax(&s, scale)
    };
    let z = pinv(ops, &kernel, iters)?;
    let right = {
        let s = ops.matmul_nt(&q_land, k)?;
        let b = ops.softmax(&s, scale);
        ops.matmul(&b, v)?
    };
    let mid = ops.matmul(&z, &right)?;
    let left = {
        let s = ops.matmul_nt(q, &k_land)?;
        ops.softmax(&s, scale)
    };
    ops.matmul(&left, &mid)
}

/// Landmark attention over `[h×n×d]` inputs.
pub fn nystrom_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    landmarks: usize,
    iters: usize,
    scale: f32,
) -> Result<Tensor> {
    if q.shape() != k.shape() || q.shape() != v.shape() {
        bail!(Dimension, "q, k, v shapes differ");
    }
    let (h, n, d, qs) = heads(q)?;
    if landmarks > n {
        bail!(Parameter, "{landmarks} landmarks exceed sequence length {n}");
    }
    let (_, _, _, ks) = heads(k)?;
    let (_, _, _, vs) = heads(v)?;
    let mut ops = Eager::new();
    let outs = qs
        .iter()
        .zip(&ks)
        .zip(&vs)
        .map(|((qh, kh), vh)| nystrom(&mut ops, qh, kh, vh, landmarks, iters, scale))
        .collect::<Result<Vec<_>>>()?;
    stack_heads(outs, h, n, d)
}
