//! ADF and KPSS stationarity tests for dataset profiling.
//!
//! ADF (constant, no trend): null hypothesis is a unit root, so
//! `p > 0.05` means non-stationary. KPSS (level variant) inverts the
//! null: `p < 0.05` means non-stationary. P-values come from linear
//! interpolation in the standard critical-value tables and are clamped
//! to the table range, which is how the usual reference implementations
//! report them as well.

use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Result, TtcdError};
use crate::numeric::linalg::{least_squares, least_squares_with_stderr};

/// ADF p-values are clamped to this range.
pub const ADF_P_RANGE: (f64, f64) = (0.001, 0.99);
/// KPSS p-values are clamped to this range.
pub const KPSS_P_RANGE: (f64, f64) = (0.01, 0.10);

// Dickey-Fuller tau distribution, constant-only case:
// (p, statistic) anchors, ascending in statistic.
const ADF_TABLE: [(f64, f64); 9] = [
    (0.01, -3.43),
    (0.025, -3.12),
    (0.05, -2.86),
    (0.10, -2.57),
    (0.50, -1.567),
    (0.90, -0.44),
    (0.95, -0.07),
    (0.975, 0.23),
    (0.99, 0.60),
];

// KPSS level-stationarity critical values: (p, statistic), p falls as
// the statistic grows.
const KPSS_TABLE: [(f64, f64); 4] = [
    (0.10, 0.347),
    (0.05, 0.463),
    (0.025, 0.574),
    (0.01, 0.739),
];

/// Augmented Dickey-Fuller test (constant, no trend).
///
/// Fits `Δx_t = c + γ x_{t-1} + Σ φ_k Δx_{t-k} + e` by least squares and
/// reports the t-ratio of γ. `max_lag = None` selects
/// `⌊12 (T/100)^{1/4}⌋` trimmed by AIC.
pub fn adf_test(x: &[f64], max_lag: Option<usize>) -> Result<(f64, f64)> {
    validate_series(x)?;
    let t = x.len();
    let p_max = match max_lag {
        Some(p) => p,
        None => (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize,
    };
    // keep enough residual observations
    let p_max = p_max.min(t.saturating_sub(12));

    let lags = match max_lag {
        Some(p) => p,
        None => select_adf_lag(x, p_max)?,
    };

    let (stat, _beta) = adf_stat(x, lags, lags)?;
    let p = interp_p_ascending(&ADF_TABLE, stat, ADF_P_RANGE);
    Ok((stat, p))
}

/// t-ratio of γ with `lags` augmentation terms, using observations from
/// `start_lag + 1` onward (so candidates with different lags can share a
/// sample during selection).
fn adf_stat(x: &[f64], lags: usize, start_lag: usize) -> Result<(f64, f64)> {
    let t = x.len();
    let cols = 2 + lags; // 1, x_{t-1}, Δx_{t-1..p}
    let first = start_lag + 1;
    let rows = t - first;
    if rows <= cols + 2 {
        return Err(TtcdError::Config(format!(
            "series too short for ADF with {lags} lags"
        )));
    }
    let dx: Vec<f64> = (1..t).map(|i| x[i] - x[i - 1]).collect(); // dx[i] = x[i+1]-x[i]... careful
    let mut xm = Vec::with_capacity(rows * cols);
    let mut y = Vec::with_capacity(rows);
    for i in first..t {
        y.push(x[i] - x[i - 1]);
        xm.push(1.0);
        xm.push(x[i - 1]);
        for k in 1..=lags {
            xm.push(dx[i - k - 1]); // Δx_{t-k} = x[i-k] - x[i-k-1]
        }
    }
    let (beta, stderr) = least_squares_with_stderr(&xm, cols, &y)?;
    if stderr[1] <= 0.0 {
        return Err(TtcdError::Domain("degenerate ADF regression".into()));
    }
    Ok((beta[1] / stderr[1], beta[1]))
}

/// AIC selection over 0..=p_max on a shared sample.
fn select_adf_lag(x: &[f64], p_max: usize) -> Result<usize> {
    let t = x.len();
    let first = p_max + 1;
    let mut best = (f64::INFINITY, 0usize);
    for p in 0..=p_max {
        let cols = 2 + p;
        let rows = t - first;
        if rows <= cols + 2 {
            break;
        }
        let dx: Vec<f64> = (1..t).map(|i| x[i] - x[i - 1]).collect();
        let mut xm = Vec::with_capacity(rows * cols);
        let mut y = Vec::with_capacity(rows);
        for i in first..t {
            y.push(x[i] - x[i - 1]);
            xm.push(1.0);
            xm.push(x[i - 1]);
            for k in 1..=p {
                xm.push(dx[i - k - 1]);
            }
        }
        let beta = match least_squares(&xm, cols, &y) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let mut rss = 0.0;
        for r in 0..rows {
            let fit: f64 = (0..cols).map(|j| xm[r * cols + j] * beta[j]).sum();
            rss += (y[r] - fit) * (y[r] - fit);
        }
        let aic = rows as f64 * (rss / rows as f64).max(1e-300).ln() + 2.0 * cols as f64;
        if aic < best.0 {
            best = (aic, p);
        }
    }
    Ok(best.1)
}

/// KPSS level-stationarity test.
///
/// Statistic `T^-2 Σ S_t^2 / s^2(bw)` with Newey-West long-run variance
/// (Bartlett kernel). `bandwidth = None` selects `⌊4 (T/100)^{1/4}⌋`.
pub fn kpss_test(x: &[f64], bandwidth: Option<usize>) -> Result<(f64, f64)> {
    validate_series(x)?;
    let t = x.len();
    let bw = bandwidth.unwrap_or_else(|| (4.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize);
    let mean = x.iter().sum::<f64>() / t as f64;
    let e: Vec<f64> = x.iter().map(|v| v - mean).collect();

    let mut s = 0.0;
    let mut sum_s2 = 0.0;
    for &ei in &e {
        s += ei;
        sum_s2 += s * s;
    }

    // Newey-West long-run variance with Bartlett weights
    let gamma0 = e.iter().map(|v| v * v).sum::<f64>() / t as f64;
    let mut lrv = gamma0;
    for j in 1..=bw.min(t - 1) {
        let mut gj = 0.0;
        for i in j..t {
            gj += e[i] * e[i - j];
        }
        gj /= t as f64;
        lrv += 2.0 * (1.0 - j as f64 / (bw + 1) as f64) * gj;
    }
    if lrv <= 0.0 {
        return Err(TtcdError::Domain("non-positive long-run variance".into()));
    }
    let stat = sum_s2 / ((t * t) as f64 * lrv);
    let p = interp_p_descending(&KPSS_TABLE, stat, KPSS_P_RANGE);
    Ok((stat, p))
}

fn validate_series(x: &[f64]) -> Result<()> {
    if x.len() < 20 {
        return Err(TtcdError::Config(format!(
            "series too short for a unit-root test: {} < 20",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TtcdError::NonFinite("stationarity-test input".into()));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
    // relative threshold: constant columns summed in floating point leave
    // variance around 1e-31, not exactly zero
    if var <= 1e-20 * (1.0 + mean * mean) {
        return Err(TtcdError::Domain(
            "zero-variance series has no unit-root statistic".into(),
        ));
    }
    Ok(())
}

/// Interpolation where p grows with the statistic (ADF).
fn interp_p_ascending(table: &[(f64, f64)], stat: f64, clamp: (f64, f64)) -> f64 {
    if stat <= table[0].1 {
        return clamp.0;
    }
    if stat >= table[table.len() - 1].1 {
        return clamp.1;
    }
    for w in table.windows(2) {
        let ((p0, s0), (p1, s1)) = (w[0], w[1]);
        if stat <= s1 {
            let frac = (stat - s0) / (s1 - s0);
            return (p0 + frac * (p1 - p0)).clamp(clamp.0, clamp.1);
        }
    }
    clamp.1
}

/// Interpolation where p falls as the statistic grows (KPSS).
fn interp_p_descending(table: &[(f64, f64)], stat: f64, clamp: (f64, f64)) -> f64 {
    if stat <= table[0].1 {
        return clamp.1;
    }
    if stat >= table[table.len() - 1].1 {
        return clamp.0;
    }
    for w in table.windows(2) {
        let ((p0, s0), (p1, s1)) = (w[0], w[1]);
        if stat <= s1 {
            let frac = (stat - s0) / (s1 - s0);
            return (p0 + frac * (p1 - p0)).clamp(clamp.0, clamp.1);
        }
    }
    clamp.0
}

/// One variable's row in a stationarity report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableVerdict {
    pub name: String,
    pub adf_stat: f64,
    pub adf_p: f64,
    /// ADF verdict at alpha = 0.05 (p <= 0.05 rejects the unit root).
    pub adf_stationary: bool,
    pub kpss_stat: f64,
    pub kpss_p: f64,
    /// KPSS verdict at alpha = 0.05 (p < 0.05 rejects stationarity).
    pub kpss_stationary: bool,
}

/// Per-variable ADF/KPSS profile of a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityReport {
    pub rows: Vec<VariableVerdict>,
}

impl StationarityReport {
    /// Table like the dataset profiling tables: variable, p-value and
    /// verdict per test.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>10} {:>11} {:>10} {:>11}\n",
            "Variable", "ADF p", "Stationary", "KPSS p", "Stationary"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>10.3} {:>11} {:>10.3} {:>11}\n",
                r.name,
                r.adf_p,
                if r.adf_stationary { "Yes" } else { "No" },
                r.kpss_p,
                if r.kpss_stationary { "Yes" } else { "No" },
            ));
        }
        out
    }
}

/// Runs both tests on every variable of a dataset.
pub fn profile(ds: &TimeSeriesDataset) -> Result<StationarityReport> {
    let mut rows = Vec::with_capacity(ds.n_vars());
    for (v, name) in ds.names().iter().enumerate() {
        let col = ds.column(v);
        let (adf_stat, adf_p) = adf_test(&col, None)?;
        let (kpss_stat, kpss_p) = kpss_test(&col, None)?;
        rows.push(VariableVerdict {
            name: name.clone(),
            adf_stat,
            adf_p,
            adf_stationary: adf_p <= 0.05,
            kpss_stat,
            kpss_p,
            kpss_stationary: kpss_p >= 0.05,
        });
    }
    Ok(StationarityReport { rows })
}
