//! Trace of the matrix exponential of `A ⊙ A`, the smooth acyclicity
//! functional `h(A) = tr(exp(A ⊙ A)) - n`.
//!
//! `h` is zero exactly when the weighted digraph with adjacency `A ⊙ A`
//! has no directed cycle. The exponential is computed by truncated power
//! series with scaling-and-squaring; for the matrix sizes this crate sees
//! (n up to a few dozen) that is both fast and accurate.

use crate::error::{Result, TtcdError};
use crate::numeric::array::Array;

const SERIES_TOL: f64 = 1e-12;

/// `tr(exp(A ⊙ A)) - n` for a square matrix `A`.
pub fn trace_expm_gap(a: &Array) -> Result<f64> {
    let (gap, _) = trace_expm_gap_with_exp(a)?;
    Ok(gap)
}

/// Gradient of `trace_expm_gap` with respect to `A`:
/// `∇h = (exp(A ⊙ A))^T ⊙ 2A`.
pub fn trace_expm_gap_grad(a: &Array) -> Result<Array> {
    let (_, e) = trace_expm_gap_with_exp(a)?;
    let n = a.shape()[0];
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = e[j * n + i] * 2.0 * a.data()[i * n + j];
        }
    }
    Array::from_vec(vec![n, n], g)
}

/// Returns both the gap and the dense `exp(A ⊙ A)` (n*n, row-major).
pub fn trace_expm_gap_with_exp(a: &Array) -> Result<(f64, Vec<f64>)> {
    if a.rank() != 2 || a.shape()[0] != a.shape()[1] {
        return Err(TtcdError::Shape(format!(
            "trace_expm_gap wants a square matrix, got {:?}",
            a.shape()
        )));
    }
    a.ensure_finite("trace_expm_gap input")?;
    let n = a.shape()[0];
    if n == 0 {
        return Ok((0.0, vec![]));
    }

    // B = A ⊙ A (entrywise, nonnegative)
    let mut b: Vec<f64> = a.data().iter().map(|&v| v * v).collect();

    // scale so the series converges fast: B /= 2^s with ||B||_1 / 2^s <= 0.5
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| b[i * n + j].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut s = 0u32;
    if norm1 > 0.5 {
        s = (norm1 / 0.5).log2().ceil() as u32;
        let scale = 0.5f64.powi(s as i32);
        for v in &mut b {
            *v *= scale;
        }
    }

    // exp(B) by power series
    let mut e = identity(n);
    let mut term = identity(n);
    for k in 1..=60 {
        term = matmul_scaled(&term, &b, n, 1.0 / k as f64);
        let mut max_term = 0.0f64;
        for (ei, ti) in e.iter_mut().zip(&term) {
            *ei += ti;
            max_term = max_term.max(ti.abs());
        }
        if max_term < SERIES_TOL {
            break;
        }
    }
    // undo scaling: square s times
    for _ in 0..s {
        e = matmul_scaled(&e, &e, n, 1.0);
    }

    let trace: f64 = (0..n).map(|i| e[i * n + i]).sum();
    Ok((trace - n as f64, e))
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn matmul_scaled(a: &[f64], b: &[f64], n: usize, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k] * scale;
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gap_is_zero() {
        let a = Array::zeros(&[3, 3]);
        assert_eq!(trace_expm_gap(&a).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_two_cycle_closed_form() {
        // A[0,1] = A[1,0] = 1 -> B = A⊙A has eigenvalues ±1,
        // tr(exp(B)) = e + 1/e = 2cosh(1)
        let a = Array::from_vec(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let expect = 2.0 * 1.0f64.cosh() - 2.0;
        assert!((trace_expm_gap(&a).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn strictly_upper_triangular_is_exactly_zero() {
        let a = Array::from_vec(
            vec![4, 4],
            vec![
                0.0, 3.5, -2.0, 10.0, //
                0.0, 0.0, 7.3, -0.1, //
                0.0, 0.0, 0.0, 99.0, //
                0.0, 0.0, 0.0, 0.0,
            ],
        )
        .unwrap();
        assert!(trace_expm_gap(&a).unwrap().abs() < 1e-10);
    }

    #[test]
    fn rejects_non_square() {
        let a = Array::zeros(&[2, 3]);
        assert!(trace_expm_gap(&a).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        // random-ish 4x4
        let vals: Vec<f64> = (0..16)
            .map(|i| ((i * 2654435761u64 as usize) % 17) as f64 / 8.5 - 1.0)
            .collect();
        let a = Array::from_vec(vec![4, 4], vals).unwrap();
        let g = trace_expm_gap_grad(&a).unwrap();
        let eps = 1e-5;
        for idx in 0..16 {
            let mut plus = a.clone();
            plus.data_mut()[idx] += eps;
            let mut minus = a.clone();
            minus.data_mut()[idx] -= eps;
            let fd =
                (trace_expm_gap(&plus).unwrap() - trace_expm_gap(&minus).unwrap()) / (2.0 * eps);
            let rel = (g.data()[idx] - fd).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-6, "coord {idx}: analytic {} fd {}", g.data()[idx], fd);
        }
    }

    #[test]
    fn large_entries_scaled_correctly() {
        // 1-cycle self loop of weight 3: tr(exp(diag(9,0))) - 2 = e^9 - 1
        let a = Array::from_vec(vec![2, 2], vec![3.0, 0.0, 0.0, 0.0]).unwrap();
        let expect = 9.0f64.exp() - 1.0;
        let got = trace_expm_gap(&a).unwrap();
        assert!((got - expect).abs() / expect < 1e-10);
    }
}
