//! Gather/scatter attention over the allowed pairs of a mask.
//!
//! Scores and probabilities are stored only for allowed pairs, so memory and
//! work follow [`AttentionMask::cardinality`] rather than `n²`.

use alloc::vec;
use alloc::vec::Vec;

use super::AttentionMask;
use crate::numcore::kernels::dot;

/// One head of masked attention over `[n×d]` row-major `q`, `k`, `v`.
/// Returns the output and the per-pair probabilities in mask order.
pub fn attend_head(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    d: usize,
    mask: &AttentionMask,
    scale: f32,
) -> (Vec<f32>, Vec<f32>) {
    let n = mask.len();
    let mut out = vec![0.0f32; n * d];
    let mut probs = vec![0.0f32; mask.cardinality()];
    for i in 0..n {
        let qi = &q[i * d..(i + 1) * d];
        let range = mask.row_range(i);
        let keys = mask.row(i);
        let p = &mut probs[range];
        let mut max = f32::NEG_INFINITY;
        for (s, &j) in p.iter_mut().zip(keys) {
            let j = j as usize;
            *s = scale * dot(qi, &k[j * d..(j + 1) * d]);
            max = max.max(*s);
        }
        let mut total = 0.0f32;
        for s in p.iter_mut() {
            *s = libm::expf(*s - max);
            total += *s;
        }
        let inv = 1.0 / total;
        let oi = &mut out[i * d..(i + 1) * d];
        for (s, &j) in p.iter_mut().zip(keys) {
            *s *= inv;
            let j = j as usize;
            for (o, vv) in oi.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                *o += *s * vv;
            }
        }
    }
    (out, probs)
}

/// Vector-Jacobian product of [`attend_head`]: `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub fn attend_head_backward(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    d: usize,
    mask: &AttentionMask,
    scale: f32,
    probs: &[f32],
    dout: &[f32],
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let n = mask.len();
    let mut dq = vec![0.0f32; n * d];
    let mut dk = vec![0.0f32; n * d];
    let mut dv = vec![0.0f32; n * d];
    let mut dp: Vec<f32> = Vec::new();
    for i in 0..n {
        let keys = mask.row(i);
        let p = &probs[mask.row_range(i)];
        let gi = &dout[i * d..(i + 1) * d];
        dp.clear();
        let mut weighted = 0.0f32;
        for (&pj, &j) in p.iter().zip(keys) {
            let j = j as usize;
            let g = dot(gi, &v[j * d..(j + 1) * d]);
            dp.push(g);
            weighted += pj * g;
            for (dvv, gg) in dv[j * d..(j + 1) * d].iter_mut().zip(gi) {
                *dvv += pj * gg;
            }
        }
        let qi = &q[i * d..(i + 1) * d];
        for ((&pj, &j), &g) in p.iter().zip(keys).zip(&dp) {
            let j = j as usize;
            let ds = scale * pj * (g - weighted);
            if ds == 0.0 {
                continue;
            }
            let kj = &k[j * d..(j + 1) * d];
            for (dqq, kk) in dq[i * d..(i + 1) * d].iter_mut().zip(kj) {
                *dqq += ds * kk;
            }
            for (dkk, qq) in dk[j * d..(j + 1) * d].iter_mut().zip(qi) {
                *dkk += ds * qq;
            }
        }
    }
    (dq, dk, dv)
}
