//! Slice-level numeric kernels shared by the eager and taped executors.

use alloc::vec;
use alloc::vec::Vec;

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`.
pub fn matmul_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// `a[k×m]ᵀ · b[k×n]`.
pub fn matmul_tn(a: &[f32], b: &[f32], k: usize, m: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub fn transpose(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place `softmax(scale · row)` over every `cols`-wide row.
pub fn softmax_rows_inplace(x: &mut [f32], cols: usize, scale: f32) {
    if cols == 0 {
        return;
    }
    for row in x.chunks_mut(cols) {
        softmax_inplace(row, scale);
    }
}

/// Max-subtracted `softmax(scale · row)`.
pub fn softmax_inplace(row: &mut [f32], scale: f32) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v * scale));
    let mut total = 0.0f32;
    for v in row.iter_mut() {
        *v = libm::expf(*v * scale - max);
        total += *v;
    }
    let inv = 1.0 / total;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// `log softmax(scale · row)` written into `out`.
pub fn log_softmax(row: &[f32], scale: f32, out: &mut [f32]) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v * scale));
    let total: f32 = row.iter().map(|&v| libm::expf(v * scale - max)).sum();
    let log_z = max + libm::logf(total);
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v * scale - log_z;
    }
}

const FRAC_1_SQRT_2: f32 = core::f32::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f32 = 0.398_942_3;

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_grad(x: f32) -> f32 {
    let cdf = 0.5 * (1.0 + libm::erff(x * FRAC_1_SQRT_2));
    let pdf = INV_SQRT_2PI * libm::expf(-0.5 * x * x);
    cdf + x * pdf
}

/// Row-wise layer norm. Returns `(y, x_hat, rstd)`.
pub fn layer_norm(
    x: &[f32],
    gamma: &[f32],
    beta: &[f32],
    cols: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let rows = x.len() / cols;
    let mut y = vec![0.0f32; x.len()];
    let mut xhat = vec![0.0f32; x.len()];
    let mut rstd = vec![0.0f32; rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f32>() / cols as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / cols as f32;
        let rs = 1.0 / libm::sqrtf(var + LAYER_NORM_EPS);
        rstd[r] = rs;
        for c in 0..cols {
            let h = (row[c] - mean) * rs;
            xhat[r * cols + c] = h;
            y[r * cols + c] = h * gamma[c] + beta[c];
        }
    }
    (y, xhat, rstd)
}

/// Gradients of layer norm: `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward(
    g: &[f32],
    xhat: &[f32],
    rstd: &[f32],
    gamma: &[f32],
    cols: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let rows = rstd.len();
    let mut dx = vec![0.0f32; g.len()];
    let mut dgamma = vec![0.0f32; cols];
    let mut dbeta = vec![0.0f32; cols];
    let n = cols as f32;
    for r in 0..rows {
        let gr = &g[r * cols..(r + 1) * cols];
        let hr = &xhat[r * cols..(r + 1) * cols];
        let mut sum_dh = 0.0f32;
        let mut sum_dh_h = 0.0f32;
        for c in 0..cols {
            dgamma[c] += gr[c] * hr[c];
            dbeta[c] += gr[c];
            let dh = gr[c] * gamma[c];
            sum_dh += dh;
            sum_dh_h += dh * hr[c];
        }
        for c in 0..cols {
            let dh = gr[c] * gamma[c];
            dx[r * cols + c] = rstd[r] / n * (n * dh - sum_dh - hr[c] * sum_dh_h);
        }
    }
    (dx, dgamma, dbeta)
}

/// Contiguous segment bounds used for landmark means: segment `i` of `m`
/// covers `[i·n/m, (i+1)·n/m)`.
pub fn segment_bounds(n: usize, m: usize, i: usize) -> (usize, usize) {
    (i * n / m, (i + 1) * n / m)
}

pub fn add_assign(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f32> = (0..6).map(|v| v as f32 - 2.0).collect(); // 2×3
        let b: Vec<f32> = (0..12).map(|v| (v as f32) * 0.5).collect(); // 3×4
        let ab = matmul(&a, &b, 2, 3, 4);
        let bt = transpose(&b, 3, 4);
        assert_eq!(ab, matmul_nt(&a, &bt, 2, 3, 4));
        let at = transpose(&a, 2, 3);
        assert_eq!(ab, matmul_tn(&at, &b, 3, 2, 4));
    }

    #[test]
    fn segments_tile_the_range() {
        for (n, m) in [(16, 4), (10, 3), (7, 7), (5, 1)] {
            let mut next = 0;
            for i in 0..m {
                let (s, e) = segment_bounds(n, m, i);
                assert_eq!(s, next);
                assert!(e > s);
                next = e;
            }
            assert_eq!(next, n);
        }
    }

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_7).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158_655_3).abs() < 1e-6);
    }
}
