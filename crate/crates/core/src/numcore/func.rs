//! Tensor-level forward functions. The eager executor calls these directly;
//! the tape calls them and records what the backward pass needs.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::Tensor;
use crate::attention::{kernel as attn_kernel, AttentionMask};
use crate::error::{bail, Result};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        bail!(Dimension, "matmul inner dimensions {k} and {k2} differ");
    }
    Ok(Tensor::from_parts(
        vec![m, n],
        kernels::matmul(a.data(), b.data(), m, k, n),
    ))
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (n, k2) = b.dims2()?;
    if k != k2 {
        bail!(Dimension, "matmul_nt inner dimensions {k} and {k2} differ");
    }
    Ok(Tensor::from_parts(
        vec![m, n],
        kernels::matmul_nt(a.data(), b.data(), m, k, n),
    ))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    Ok(Tensor::from_parts(
        vec![c, r],
        kernels::transpose(a.data(), r, c),
    ))
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(
            Dimension,
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        );
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "add")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mul")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

/// Adds `bias[D]` to every row of `x[..×D]`.
pub fn add_row(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = x.last_dim();
    if bias.len() != d {
        bail!(Dimension, "bias of {} values for rows of {d}", bias.len());
    }
    let mut data = x.data().to_vec();
    for row in data.chunks_mut(d) {
        kernels::add_assign(row, bias.data());
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

pub fn scale(x: &Tensor, c: f32) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|v| v * c).collect())
}

/// `c·I − x` for square `x`.
pub fn identity_minus(x: &Tensor, c: f32) -> Result<Tensor> {
    let (r, cols) = x.dims2()?;
    if r != cols {
        bail!(Dimension, "identity_minus needs a square matrix, got {r}×{cols}");
    }
    let mut data: Vec<f32> = x.data().iter().map(|v| -v).collect();
    for i in 0..r {
        data[i * r + i] += c;
    }
    Ok(Tensor::from_parts(vec![r, r], data))
}

pub fn gelu(x: &Tensor) -> Tensor {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data().iter().map(|&v| kernels::gelu(v)).collect(),
    )
}

/// Layer norm over the trailing axis. Also returns the normalised input and
/// the per-row reciprocal standard deviations.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
    let d = x.last_dim();
    if gamma.len() != d || beta.len() != d {
        bail!(Dimension, "layer norm parameters must have {d} values");
    }
    let (y, xhat, rstd) = kernels::layer_norm(x.data(), gamma.data(), beta.data(), d);
    Ok((Tensor::from_parts(x.shape().to_vec(), y), xhat, rstd))
}

/// `softmax(scale · x)` along the trailing axis.
pub fn softmax(x: &Tensor, scale: f32) -> Tensor {
    let mut data = x.data().to_vec();
    kernels::softmax_rows_inplace(&mut data, x.last_dim(), scale);
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Temperature softmax `exp(z_i/T) / Σ_j exp(z_j/T)` along the trailing axis.
pub fn softmax_t(z: &Tensor, temperature: f32) -> Result<Tensor> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        bail!(Parameter, "temperature must be positive, got {temperature}");
    }
    Ok(softmax(z, 1.0 / temperature))
}

pub fn embedding(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    let (v, d) = table.dims2()?;
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= v {
            bail!(Input, "token id {id} outside vocabulary of {v}");
        }
        data.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
    }
    Ok(Tensor::from_parts(vec![ids.len(), d], data))
}

pub fn slice_block(x: &Tensor, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    if row0 + rows > r || col0 + cols > c {
        bail!(Dimension, "block {rows}×{cols} at ({row0},{col0}) exceeds {r}×{c}");
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in row0..row0 + rows {
        data.extend_from_slice(&x.data()[i * c + col0..i * c + col0 + cols]);
    }
    Ok(Tensor::from_parts(vec![rows, cols], data))
}

/// Zero matrix of `shape` with each part written at its `(row, col)` offset.
pub fn assemble(shape: [usize; 2], parts: &[(&Tensor, usize, usize)]) -> Result<Tensor> {
    let [r, c] = shape;
    let mut data = vec![0.0f32; r * c];
    for &(part, row0, col0) in parts {
        let (pr, pc) = part.dims2()?;
        if row0 + pr > r || col0 + pc > c {
            bail!(Dimension, "part {pr}×{pc} at ({row0},{col0}) exceeds {r}×{c}");
        }
        for i in 0..pr {
            data[(row0 + i) * c + col0..(row0 + i) * c + col0 + pc]
                .copy_from_slice(&part.data()[i * pc..(i + 1) * pc]);
        }
    }
    Ok(Tensor::from_parts(vec![r, c], data))
}

fn check_qkv(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize)> {
    let (n, d) = q.dims2()?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        bail!(
            Dimension,
            "q, k, v shapes {:?}, {:?}, {:?} differ",
            q.shape(),
            k.shape(),
            v.shape()
        );
    }
    Ok((n, d))
}

/// Single-head masked attention on `[n×d]` inputs. Returns the output and
/// the per-pair probabilities.
pub fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: &AttentionMask,
    scale: f32,
) -> Result<(Tensor, Tensor)> {
    let (n, d) = check_qkv(q, k, v)?;
    if mask.len() != n {
        bail!(Dimension, "mask built for length {} used at length {n}", mask.len());
    }
    let (out, probs) = attn_kernel::attend_head(q.data(), k.data(), v.data(), d, mask, scale);
    let probs = Tensor::vector(probs);
    Ok((Tensor::from_parts(vec![n, d], out), probs))
}

/// Means of `m` contiguous row segments of `x[n×d]`.
pub fn segment_means(x: &Tensor, m: usize) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if m == 0 || m > n {
        bail!(Parameter, "{m} segments for {n} rows");
    }
    let mut data = vec![0.0f32; m * d];
    for s in 0..m {
        let (lo, hi) = kernels::segment_bounds(n, m, s);
        let inv = 1.0 / (hi - lo) as f32;
        let out = &mut data[s * d..(s + 1) * d];
        for r in lo..hi {
            kernels::add_assign(out, &x.data()[r * d..(r + 1) * d]);
        }
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
    Ok(Tensor::from_parts(vec![m, d], data))
}

/// `1 / (‖A‖₁ · ‖A‖∞)` with the maximising column and row.
pub fn pinv_init_scale(a: &Tensor) -> Result<(Tensor, usize, usize)> {
    let (r, c) = a.dims2()?;
    let mut col_sums = vec![0.0f32; c];
    let mut best_row = (0, f32::NEG_INFINITY);
    for i in 0..r {
        let row = &a.data()[i * c..(i + 1) * c];
        let mut s = 0.0f32;
        for (j, v) in row.iter().enumerate() {
            s += v.abs();
            col_sums[j] += v.abs();
        }
        if s > best_row.1 {
            best_row = (i, s);
        }
    }
    let best_col = col_sums
        .iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |b, (j, &s)| if s > b.1 { (j, s) } else { b });
    let denom = best_col.1 * best_row.1;
    if !(denom > 0.0) || !denom.is_finite() {
        bail!(Numeric, "pseudoinverse initialisation of a zero or non-finite matrix");
    }
    Ok((Tensor::scalar(1.0 / denom), best_col.0, best_row.0))
}

pub fn scale_by(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let s = s.item()?;
    Ok(scale(x, s))
}

pub fn sum(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data().iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let i = Tensor::matrix(2, 2, alloc::vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::matrix(2, 2, alloc::vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&i, &b).unwrap(), b);
        let two = Tensor::matrix(1, 1, alloc::vec![2.0]).unwrap();
        let three = Tensor::matrix(1, 1, alloc::vec![3.0]).unwrap();
        assert_eq!(matmul(&two, &three).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn softmax_t_rejects_nonpositive_temperature() {
        let z = Tensor::vector(alloc::vec![1.0, 2.0]);
        assert!(matches!(softmax_t(&z, 0.0), Err(crate::Error::Parameter(_))));
        assert!(matches!(softmax_t(&z, -1.0), Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn softmax_t_analytic_cases() {
        let z = Tensor::vector(alloc::vec![0.0, 0.0]);
        assert_eq!(softmax_t(&z, 2.0).unwrap().data(), &[0.5, 0.5]);
        let z = Tensor::vector(alloc::vec![libm::logf(2.0), 0.0]);
        let p = softmax_t(&z, 1.0).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn segment_means_of_ramp() {
        let x = Tensor::matrix(4, 1, alloc::vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(segment_means(&x, 2).unwrap().data(), &[2.0, 6.0]);
        assert_eq!(segment_means(&x, 4).unwrap().data(), x.data());
        assert!(segment_means(&x, 5).is_err());
    }

    #[test]
    fn blocks_round_trip() {
        let x = Tensor::matrix(3, 4, (0..12).map(|v| v as f32).collect()).unwrap();
        let a = slice_block(&x, 0, 3, 0, 2).unwrap();
        let b = slice_block(&x, 0, 3, 2, 2).unwrap();
        let back = assemble([3, 4], &[(&a, 0, 0), (&b, 0, 2)]).unwrap();
        assert!(back.bit_eq(&x));
    }
}
