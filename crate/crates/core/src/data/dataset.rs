//! Multivariate time series container, CSV ingestion, and per-variable
//! normalization statistics.

use std::path::Path;

use crate::error::{Result, TtcdError};
use crate::numeric::Array;

/// Floor applied to per-variable standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// An n-variable, T-step observation matrix (rows = timesteps).
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    names: Vec<String>,
    data: Array, // (T, n)
    pub meta: Option<String>,
}

impl TimeSeriesDataset {
    pub fn new(names: Vec<String>, data: Array, meta: Option<String>) -> Result<Self> {
        if data.rank() != 2 {
            return Err(TtcdError::Shape(format!(
                "dataset wants a (T, n) matrix, got {:?}",
                data.shape()
            )));
        }
        if data.shape()[1] != names.len() {
            return Err(TtcdError::Shape(format!(
                "{} variable names but {} columns",
                names.len(),
                data.shape()[1]
            )));
        }
        data.ensure_finite("dataset")?;
        Ok(Self { names, data, meta })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of variables.
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &Array {
        &self.data
    }

    /// Value of variable `var` at timestep `t`.
    pub fn at(&self, t: usize, var: usize) -> f64 {
        self.data.data()[t * self.n_vars() + var]
    }

    /// One variable as a column vector.
    pub fn column(&self, var: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.at(t, var)).collect()
    }

    /// Writes the dataset as CSV (header of names, one row per step).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.names.join(","));
        out.push('\n');
        let n = self.n_vars();
        for t in 0..self.len() {
            let row: Vec<String> = (0..n).map(|v| format!("{}", self.at(t, v))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Loads a UTF-8, comma-separated dataset: first row variable names,
/// one row per timestep, numeric body. NaN and empty cells are rejected
/// with the offending line number.
pub fn load_csv(path: &Path) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| TtcdError::Parse {
            line: 1,
            msg: format!("{e}"),
        })?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| TtcdError::Parse {
            line: 1,
            msg: format!("{e}"),
        })?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(TtcdError::Parse {
            line: 1,
            msg: "empty header row".into(),
        });
    }
    let n = names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| TtcdError::Parse {
            line: rows + 2,
            msg: format!("{e}"),
        })?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows + 2);
        if rec.len() != n {
            return Err(TtcdError::Parse {
                line,
                msg: format!("expected {} cells, got {}", n, rec.len()),
            });
        }
        for cell in rec.iter() {
            if cell.is_empty() {
                return Err(TtcdError::Parse {
                    line,
                    msg: "empty cell".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| TtcdError::Parse {
                line,
                msg: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(TtcdError::Parse {
                    line,
                    msg: format!("non-finite cell '{cell}'"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(TtcdError::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let data = Array::from_vec(vec![rows, n], values)?;
    TimeSeriesDataset::new(names, data, Some(path.display().to_string()))
}

/// Per-variable mean and population standard deviation.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Variables whose sigma hit the floor (constant columns).
    pub floored: Vec<bool>,
}

impl NormStats {
    pub fn n_vars(&self) -> usize {
        self.mu.len()
    }
}

/// Computes per-variable mean and population (divide-by-T) standard
/// deviation; constant columns are floored to [`SIGMA_FLOOR`] and flagged.
pub fn compute_norm(ds: &TimeSeriesDataset) -> Result<NormStats> {
    let t = ds.len();
    if t < 2 {
        return Err(TtcdError::Shape(format!(
            "need at least 2 timesteps to normalize, got {t}"
        )));
    }
    let n = ds.n_vars();
    let mut mu = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    let mut floored = vec![false; n];
    for v in 0..n {
        let col = ds.column(v);
        let m = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t as f64;
        mu[v] = m;
        let s = var.sqrt();
        if s < SIGMA_FLOOR {
            sigma[v] = SIGMA_FLOOR;
            floored[v] = true;
        } else {
            sigma[v] = s;
        }
    }
    Ok(NormStats { mu, sigma, floored })
}

/// `(X - mu) / sigma` columnwise over a (..., n) array.
pub fn normalize(x: &Array, stats: &NormStats) -> Result<Array> {
    scale_shift(x, stats, |v, mu, sigma| (v - mu) / sigma)
}

/// `X * sigma + mu` columnwise over a (..., n) array.
pub fn denormalize(x: &Array, stats: &NormStats) -> Result<Array> {
    scale_shift(x, stats, |v, mu, sigma| v * sigma + mu)
}

fn scale_shift(
    x: &Array,
    stats: &NormStats,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<Array> {
    let n = stats.n_vars();
    if x.rank() == 0 || *x.shape().last().unwrap() != n {
        return Err(TtcdError::Shape(format!(
            "last axis must be {} variables, got {:?}",
            n,
            x.shape()
        )));
    }
    let mut out = x.data().to_vec();
    for (i, v) in out.iter_mut().enumerate() {
        let var = i % n;
        *v = f(*v, stats.mu[var], stats.sigma[var]);
    }
    Array::from_vec(x.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_shape_echo() {
        let mut body = String::from("a,b,c,d\n");
        for t in 0..1000 {
            body.push_str(&format!("{},{},{},{}\n", t, t * 2, t * 3, t * 4));
        }
        let f = write_tmp(&body);
        let ds = load_csv(f.path()).unwrap();
        assert_eq!(ds.n_vars(), 4);
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.names()[2], "c");
    }

    #[test]
    fn header_only_is_an_error() {
        let f = write_tmp("a,b\n");
        let err = load_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn bad_cell_cites_line_number() {
        let f = write_tmp("a,b\n1,2\n3,4\n5,6\n7,8\n9,10\n11,abc\n13,14\n");
        let err = load_csv(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 7"), "{msg}");
        assert!(msg.contains("abc"), "{msg}");
    }

    #[test]
    fn ragged_row_is_an_error() {
        let f = write_tmp("a,b\n1,2\n3\n");
        let err = load_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn norm_stats_closed_form() {
        let data = Array::from_vec(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let ds = TimeSeriesDataset::new(vec!["x".into()], data, None).unwrap();
        let st = compute_norm(&ds).unwrap();
        assert!((st.mu[0] - 2.0).abs() < 1e-15);
        assert!((st.sigma[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(!st.floored[0]);
    }

    #[test]
    fn constant_column_is_floored_and_flagged() {
        let data = Array::from_vec(vec![3, 1], vec![5.0, 5.0, 5.0]).unwrap();
        let ds = TimeSeriesDataset::new(vec!["x".into()], data, None).unwrap();
        let st = compute_norm(&ds).unwrap();
        assert_eq!(st.sigma[0], SIGMA_FLOOR);
        assert!(st.floored[0]);
    }

    #[test]
    fn normalize_roundtrip_and_moments() {
        // pseudo-random 10x3
        let vals: Vec<f64> = (0..30)
            .map(|i| ((i * 2654435761usize) % 1000) as f64 / 100.0 - 5.0)
            .collect();
        let data = Array::from_vec(vec![10, 3], vals).unwrap();
        let ds =
            TimeSeriesDataset::new(vec!["a".into(), "b".into(), "c".into()], data.clone(), None)
                .unwrap();
        let st = compute_norm(&ds).unwrap();
        let normed = normalize(&data, &st).unwrap();
        // column means 0, population std 1
        for v in 0..3 {
            let col: Vec<f64> = (0..10).map(|t| normed.data()[t * 3 + v]).collect();
            let m = col.iter().sum::<f64>() / 10.0;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 10.0;
            assert!(m.abs() < 1e-10);
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
        let back = denormalize(&normed, &st).unwrap();
        for (a, b) in data.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
