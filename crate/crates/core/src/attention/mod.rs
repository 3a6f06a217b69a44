//! Full softmax attention and the efficient patterns: dilated sliding
//! window, block-sparse with global and random blocks, local-sparse-global,
//! and the landmark (Nyström) approximation.

pub mod kernel;
mod mask;
mod nystrom;
mod spec;

pub use mask::{attended_pairs, build_layer_mask, build_mask, mask_cardinality, AttentionMask};
pub use nystrom::{iterative_pinv, nystrom, nystrom_attention, pinv};
pub use spec::AttentionSpec;

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::numcore::{func, Eager, Ops, Tensor};

/// `1/√d`.
pub fn default_scale(head_dim: usize) -> f32 {
    1.0 / libm::sqrtf(head_dim as f32)
}

/// Splits a `[h×n×d]` tensor into `h` eager `[n×d]` heads.
pub(crate) fn heads(x: &Tensor) -> Result<(usize, usize, usize, Vec<Tensor>)> {
    let [h, n, d] = x.shape()[..] else {
        bail!(Dimension, "expected [heads×n×d], got {:?}", x.shape());
    };
    let flat = Tensor::new(&[h * n, d], x.data().to_vec())?;
    let parts = (0..h)
        .map(|i| func::slice_block(&flat, i * n, n, 0, d))
        .collect::<Result<Vec<_>>>()?;
    Ok((h, n, d, parts))
}

pub(crate) fn stack_heads(parts: Vec<Tensor>, h: usize, n: usize, d: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(h * n * d);
    for p in parts {
        data.extend(p.into_data());
    }
    Tensor::new(&[h, n, d], data)
}

/// Masked multi-head attention over `[h×n×d]` inputs. Only allowed pairs are
/// scored; disallowed pairs contribute nothing.
pub fn masked_attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: &AttentionMask, scale: f32) -> Result<Tensor> {
    if q.shape() != k.shape() || q.shape() != v.shape() {
        bail!(Dimension, "q, k, v shapes differ");
    }
    let (h, n, d, qs) = heads(q)?;
    let (_, _, _, ks) = heads(k)?;
    let (_, _, _, vs) = heads(v)?;
    let mask = Arc::new(mask.clone());
    let mut ops = Eager::new();
    let outs = qs
        .iter()
        .zip(&ks)
        .zip(&vs)
        .map(|((qh, kh), vh)| ops.attention(qh, kh, vh, &mask, scale))
        .collect::<Result<Vec<_>>>()?;
    stack_heads(outs, h, n, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_mask_returns_values() {
        let mut r = rng::stream(3, 0);
        let q = Tensor::uniform(&[2, 5, 3], -2.0, 2.0, &mut r);
        let k = Tensor::uniform(&[2, 5, 3], -2.0, 2.0, &mut r);
        let v = Tensor::uniform(&[2, 5, 3], -2.0, 2.0, &mut r);
        let out = masked_attention(&q, &k, &v, &AttentionMask::identity(5), 0.5).unwrap();
        assert!(out.bit_eq(&v));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let q = Tensor::zeros(&[1, 4, 2]);
        let k = Tensor::zeros(&[1, 4, 3]);
        assert!(masked_attention(&q, &k, &k, &AttentionMask::full(4), 1.0).is_err());
        let q = Tensor::zeros(&[1, 4, 2]);
        assert!(masked_attention(&q, &q, &q, &AttentionMask::full(3), 1.0).is_err());
    }
}
