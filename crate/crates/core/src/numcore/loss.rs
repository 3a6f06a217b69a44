//! Loss primitives of the student objective.
//!
//! The `*_rows` helpers are the single arithmetic path used by both the
//! plain functions here and the taped versions on [`Tape`](super::Tape).

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::Tensor;
use crate::error::{bail, Result};

/// Tolerance on `Σ p = 1` for soft targets.
pub const PROB_SUM_TOL: f32 = 1e-5;

/// Guard below which a vector norm counts as zero.
pub const NORM_EPS: f32 = 1e-12;

fn check_temperature(t: f32) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        bail!(Parameter, "temperature must be positive, got {t}");
    }
    Ok(())
}

/// Mean over `rows` of `−Σ_v p_v · log softmax(z/T)_v`, with `targets`
/// holding one probability row per entry of `rows`.
pub(crate) fn soft_ce_rows(
    logits: &[f32],
    vocab: usize,
    rows: &[usize],
    targets: &[f32],
    temperature: f32,
) -> Result<f32> {
    check_temperature(temperature)?;
    if targets.len() != rows.len() * vocab {
        bail!(
            Dimension,
            "{} target values for {} rows of {vocab}",
            targets.len(),
            rows.len()
        );
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut logq = vec![0.0f32; vocab];
    let mut total = 0.0f32;
    for (r, &row) in rows.iter().enumerate() {
        let p = &targets[r * vocab..(r + 1) * vocab];
        let mass: f32 = p.iter().sum();
        if (mass - 1.0).abs() > PROB_SUM_TOL {
            bail!(Input, "soft targets of row {row} sum to {mass}");
        }
        let z = logits
            .get(row * vocab..(row + 1) * vocab)
            .ok_or_else(|| crate::Error::Dimension(alloc::format!("row {row} out of range")))?;
        kernels::log_softmax(z, 1.0 / temperature, &mut logq);
        let mut ce = 0.0f32;
        for (pv, lq) in p.iter().zip(&logq) {
            if *pv != 0.0 {
                ce -= pv * lq;
            }
        }
        total += ce;
    }
    Ok(total / rows.len() as f32)
}

/// Mean negative log-likelihood at the `(row, token)` targets.
pub(crate) fn mlm_rows(logits: &[f32], vocab: usize, targets: &[(usize, u32)]) -> Result<f32> {
    if targets.is_empty() {
        return Ok(0.0);
    }
    let n_rows = logits.len() / vocab;
    let mut logq = vec![0.0f32; vocab];
    let mut total = 0.0f32;
    for &(row, tok) in targets {
        if row >= n_rows || tok as usize >= vocab {
            bail!(Input, "target ({row}, {tok}) outside logits {n_rows}×{vocab}");
        }
        kernels::log_softmax(&logits[row * vocab..(row + 1) * vocab], 1.0, &mut logq);
        total -= logq[tok as usize];
    }
    Ok(total / targets.len() as f32)
}

/// Mean over rows of `1 − cos(a_r, b_r)`.
pub(crate) fn cosine_rows(a: &[f32], b: &[f32], dim: usize) -> Result<f32> {
    if a.len() != b.len() {
        bail!(Dimension, "cosine inputs have {} and {} values", a.len(), b.len());
    }
    let rows = a.len() / dim;
    if rows == 0 {
        bail!(Input, "cosine loss of empty input");
    }
    let mut total = 0.0f32;
    for r in 0..rows {
        let (ar, br) = (&a[r * dim..(r + 1) * dim], &b[r * dim..(r + 1) * dim]);
        let na = libm::sqrtf(kernels::dot(ar, ar));
        let nb = libm::sqrtf(kernels::dot(br, br));
        if na < NORM_EPS || nb < NORM_EPS {
            bail!(Numeric, "zero-norm vector in cosine embedding loss (row {r})");
        }
        total += 1.0 - kernels::dot(ar, br) / (na * nb);
    }
    Ok(total / rows as f32)
}

/// `−Σ p_i log softmax(z/T)_i` for one logit vector.
pub fn cross_entropy_soft(student_logits: &Tensor, teacher_probs: &Tensor, temperature: f32) -> Result<f32> {
    if student_logits.len() != teacher_probs.len() {
        bail!(Dimension, "logits and soft targets differ in length");
    }
    let n = student_logits.len();
    soft_ce_rows(student_logits.data(), n, &[0], teacher_probs.data(), temperature)
}

/// `1 − a·b / (‖a‖‖b‖)`.
pub fn cosine_embedding_loss(a: &Tensor, b: &Tensor) -> Result<f32> {
    cosine_rows(a.data(), b.data(), a.len().max(1))
}

/// Mean masked-token NLL over `(position, token)` targets of `logits[L×V]`.
pub fn mlm_cross_entropy(logits: &Tensor, targets: &[(usize, u32)]) -> Result<f32> {
    mlm_rows(logits.data(), logits.last_dim(), targets)
}

/// Shannon entropy (nats) of each trailing-axis distribution, averaged.
pub fn entropy(p: &Tensor) -> f32 {
    let v = p.last_dim();
    let rows: Vec<f32> = p
        .data()
        .chunks(v)
        .map(|row| {
            row.iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| -x * libm::logf(x))
                .sum()
        })
        .collect();
    rows.iter().sum::<f32>() / rows.len().max(1) as f32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_ce_perfect_match_is_zero() {
        let s = Tensor::vector(vec![1e3, -1e3]);
        let p = Tensor::vector(vec![1.0, 0.0]);
        assert!(cross_entropy_soft(&s, &p, 1.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn soft_ce_uniform_is_log_n() {
        let s = Tensor::vector(vec![0.7; 4]);
        let p = Tensor::vector(vec![0.25; 4]);
        let ce = cross_entropy_soft(&s, &p, 2.0).unwrap();
        assert!((ce - libm::logf(4.0)).abs() < 1e-6);
    }

    #[test]
    fn soft_ce_rejects_unnormalised_targets() {
        let s = Tensor::vector(vec![0.0; 3]);
        let p = Tensor::vector(vec![0.5, 0.5, 0.1]);
        assert!(matches!(
            cross_entropy_soft(&s, &p, 1.0),
            Err(crate::Error::Input(_))
        ));
    }

    #[test]
    fn cosine_reference_cases() {
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(cosine_embedding_loss(&a, &a).unwrap().abs() < 1e-6);
        let x = Tensor::vector(vec![1.0, 0.0]);
        let y = Tensor::vector(vec![0.0, 1.0]);
        assert!((cosine_embedding_loss(&x, &y).unwrap() - 1.0).abs() < 1e-6);
        let u = Tensor::vector(vec![1.0, 1.0]);
        let w = Tensor::vector(vec![-1.0, -1.0]);
        assert!((cosine_embedding_loss(&u, &w).unwrap() - 2.0).abs() < 1e-6);
        let z = Tensor::vector(vec![0.0, 0.0]);
        assert!(matches!(
            cosine_embedding_loss(&u, &z),
            Err(crate::Error::Numeric(_))
        ));
    }

    #[test]
    fn mlm_reference_cases() {
        let mut logits = vec![0.0f32; 8];
        logits[3] = 1e4;
        let l = Tensor::matrix(1, 8, logits).unwrap();
        assert!(mlm_cross_entropy(&l, &[(0, 3)]).unwrap().abs() < 1e-6);
        let u = Tensor::zeros(&[2, 8]);
        let nll = mlm_cross_entropy(&u, &[(1, 5)]).unwrap();
        assert!((nll - libm::logf(8.0)).abs() < 1e-6);
        assert_eq!(mlm_cross_entropy(&u, &[]).unwrap(), 0.0);
        assert!(mlm_cross_entropy(&u, &[(2, 0)]).is_err());
        assert!(mlm_cross_entropy(&u, &[(0, 8)]).is_err());
    }
}
