//! The operation set models are written against.
//!
//! Model code is generic over [`Ops`] so one definition runs both eagerly
//! (intermediates are freed as soon as they go out of scope) and on a
//! [`Tape`](super::Tape) for training.

use alloc::sync::Arc;

use rand::Rng as _;

use super::{func, Tensor};
use crate::attention::AttentionMask;
use crate::error::{bail, Result};
use crate::rng::Rng;

pub trait Ops {
    type T;

    fn value<'a>(&'a self, x: &'a Self::T) -> &'a Tensor;
    fn constant(&mut self, t: Tensor) -> Self::T;

    fn matmul(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    /// `a · bᵀ`.
    fn matmul_nt(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn transpose(&mut self, a: &Self::T) -> Result<Self::T>;
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn add_row(&mut self, x: &Self::T, bias: &Self::T) -> Result<Self::T>;
    fn scale(&mut self, x: &Self::T, c: f32) -> Self::T;
    /// `c·I − x`.
    fn identity_minus(&mut self, x: &Self::T, c: f32) -> Result<Self::T>;
    fn gelu(&mut self, x: &Self::T) -> Self::T;
    fn layer_norm(&mut self, x: &Self::T, gamma: &Self::T, beta: &Self::T) -> Result<Self::T>;
    /// `softmax(scale · x)` along the trailing axis.
    fn softmax(&mut self, x: &Self::T, scale: f32) -> Self::T;
    fn embedding(&mut self, table: &Self::T, ids: &[u32]) -> Result<Self::T>;
    /// Inverted dropout with keep-probability `1 − p`.
    fn dropout(&mut self, x: &Self::T, p: f32) -> Result<Self::T>;
    fn slice_block(
        &mut self,
        x: &Self::T,
        row0: usize,
        rows: usize,
        col0: usize,
        cols: usize,
    ) -> Result<Self::T>;
    fn assemble(&mut self, shape: [usize; 2], parts: &[(&Self::T, usize, usize)]) -> Result<Self::T>;
    fn attention(
        &mut self,
        q: &Self::T,
        k: &Self::T,
        v: &Self::T,
        mask: &Arc<AttentionMask>,
        scale: f32,
    ) -> Result<Self::T>;
    fn segment_means(&mut self, x: &Self::T, m: usize) -> Result<Self::T>;
    /// Scalar `1 / (‖A‖₁·‖A‖∞)`.
    fn pinv_init_scale(&mut self, a: &Self::T) -> Result<Self::T>;
    /// `x · s` for a scalar `s`.
    fn scale_by(&mut self, x: &Self::T, s: &Self::T) -> Result<Self::T>;
    fn sum(&mut self, x: &Self::T) -> Self::T;
}

/// Executes operations immediately, keeping nothing for a backward pass.
#[derive(Default)]
pub struct Eager {
    dropout_rng: Option<Rng>,
}

impl Eager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dropout(rng: Rng) -> Self {
        Self {
            dropout_rng: Some(rng),
        }
    }
}

/// Draws an inverted-dropout multiplier mask.
pub(crate) fn dropout_mask(rng: &mut Rng, n: usize, p: f32) -> Result<alloc::vec::Vec<f32>> {
    if !(0.0..1.0).contains(&p) {
        bail!(Parameter, "dropout probability {p} outside [0, 1)");
    }
    let keep = 1.0 / (1.0 - p);
    Ok((0..n)
        .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
        .collect())
}

impl Ops for Eager {
    type T = Tensor;

    fn value<'a>(&'a self, x: &'a Tensor) -> &'a Tensor {
        x
    }

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        func::matmul(a, b)
    }

    fn matmul_nt(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        func::matmul_nt(a, b)
    }

    fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        func::transpose(a)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        func::add(a, b)
    }

    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        func::mul(a, b)
    }

    fn add_row(&mut self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        func::add_row(x, bias)
    }

    fn scale(&mut self, x: &Tensor, c: f32) -> Tensor {
        func::scale(x, c)
    }

    fn identity_minus(&mut self, x: &Tensor, c: f32) -> Result<Tensor> {
        func::identity_minus(x, c)
    }

    fn gelu(&mut self, x: &Tensor) -> Tensor {
        func::gelu(x)
    }

    fn layer_norm(&mut self, x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
        Ok(func::layer_norm(x, gamma, beta)?.0)
    }

    fn softmax(&mut self, x: &Tensor, scale: f32) -> Tensor {
        func::softmax(x, scale)
    }

    fn embedding(&mut self, table: &Tensor, ids: &[u32]) -> Result<Tensor> {
        func::embedding(table, ids)
    }

    fn dropout(&mut self, x: &Tensor, p: f32) -> Result<Tensor> {
        let Some(rng) = self.dropout_rng.as_mut() else {
            bail!(Protocol, "dropout requested without a seeded generator");
        };
        let mask = dropout_mask(rng, x.len(), p)?;
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        Ok(Tensor::from_parts(x.shape().to_vec(), data))
    }

    fn slice_block(
        &mut self,
        x: &Tensor,
        row0: usize,
        rows: usize,
        col0: usize,
        cols: usize,
    ) -> Result<Tensor> {
        func::slice_block(x, row0, rows, col0, cols)
    }

    fn assemble(&mut self, shape: [usize; 2], parts: &[(&Tensor, usize, usize)]) -> Result<Tensor> {
        func::assemble(shape, parts)
    }

    fn attention(
        &mut self,
        q: &Tensor,
        k: &Tensor,
        v: &Tensor,
        mask: &Arc<AttentionMask>,
        scale: f32,
    ) -> Result<Tensor> {
        Ok(func::attention(q, k, v, mask, scale)?.0)
    }

    fn segment_means(&mut self, x: &Tensor, m: usize) -> Result<Tensor> {
        func::segment_means(x, m)
    }

    fn pinv_init_scale(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(func::pinv_init_scale(a)?.0)
    }

    fn scale_by(&mut self, x: &Tensor, s: &Tensor) -> Result<Tensor> {
        func::scale_by(x, s)
    }

    fn sum(&mut self, x: &Tensor) -> Tensor {
        func::sum(x)
    }
}
