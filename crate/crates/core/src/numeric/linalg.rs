//! Small dense least-squares solver (normal equations, partial pivoting).
//! Design matrices in this crate have at most a few dozen columns.

use crate::error::{Result, TtcdError};

/// Ordinary least squares: returns `beta` minimizing `||X beta - y||^2`.
/// `x` is row-major with `cols` columns.
pub fn least_squares(x: &[f64], cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    let rows = y.len();
    if cols == 0 || rows * cols != x.len() {
        return Err(TtcdError::Shape(format!(
            "least_squares: {} values is not {} rows x {} cols",
            x.len(),
            rows,
            cols
        )));
    }
    if rows < cols {
        return Err(TtcdError::Shape(format!(
            "least_squares: underdetermined ({rows} rows, {cols} cols)"
        )));
    }
    // X^T X and X^T y
    let mut xtx = vec![0.0; cols * cols];
    let mut xty = vec![0.0; cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for i in 0..cols {
            xty[i] += row[i] * y[r];
            for j in i..cols {
                xtx[i * cols + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            xtx[i * cols + j] = xtx[j * cols + i];
        }
    }
    solve(&mut xtx, &mut xty, cols)?;
    Ok(xty)
}

/// OLS with coefficient standard errors (for t-ratios).
/// Returns `(beta, stderr)` with `stderr[i] = sqrt(s^2 * (X'X)^-1_{ii})`,
/// `s^2 = RSS / (rows - cols)`.
pub fn least_squares_with_stderr(
    x: &[f64],
    cols: usize,
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = y.len();
    let beta = least_squares(x, cols, y)?;
    if rows <= cols {
        return Err(TtcdError::Shape(
            "no residual degrees of freedom for standard errors".into(),
        ));
    }
    let mut rss = 0.0;
    for r in 0..rows {
        let fit: f64 = (0..cols).map(|j| x[r * cols + j] * beta[j]).sum();
        let e = y[r] - fit;
        rss += e * e;
    }
    let s2 = rss / (rows - cols) as f64;

    // diagonal of (X'X)^-1 by solving for unit vectors
    let mut xtx = vec![0.0; cols * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for i in 0..cols {
            for j in 0..cols {
                xtx[i * cols + j] += row[i] * row[j];
            }
        }
    }
    let mut stderr = vec![0.0; cols];
    for i in 0..cols {
        let mut a = xtx.clone();
        let mut e = vec![0.0; cols];
        e[i] = 1.0;
        solve(&mut a, &mut e, cols)?;
        stderr[i] = (s2 * e[i]).max(0.0).sqrt();
    }
    Ok((beta, stderr))
}

/// Solves `A x = b` in place (b becomes x). Partial pivoting.
pub fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        // pivot
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-12 {
            return Err(TtcdError::Domain(
                "singular system in least squares".into(),
            ));
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let diag = a[col * n + col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= factor * a[col * n + j];
            }
            b[r] -= factor * b[col];
        }
    }
    for i in 0..n {
        b[i] /= a[i * n + i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_model() {
        // y = 2*a - 3*b + 1
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let a = (i as f64 * 0.7).sin();
            let b = (i as f64 * 1.3).cos();
            x.extend_from_slice(&[a, b, 1.0]);
            y.push(2.0 * a - 3.0 * b + 1.0);
        }
        let beta = least_squares(&x, 3, &y).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-9);
        assert!((beta[1] + 3.0).abs() < 1e-9);
        assert!((beta[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_singular() {
        // two identical columns
        let x = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let y = vec![1.0, 2.0, 3.0];
        assert!(least_squares(&x, 2, &y).is_err());
    }
}
