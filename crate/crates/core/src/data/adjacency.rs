//! Weighted temporal adjacency: all lagged and contemporaneous edge
//! strengths in one `(n * (l_max+1)) x n` matrix.
//!
//! Row index encodes `(source variable i, lag slot j)` with `j = 0`
//! meaning lag `l_max` and `j = l_max` meaning contemporaneous; the
//! column is the target variable. Lag slots are ordered earliest-first
//! so the contemporaneous block sits in the last slot.

use std::path::Path;

use crate::error::{Result, TtcdError};
use crate::numeric::Array;

/// Weighted adjacency of the full temporal graph.
#[derive(Debug, Clone)]
pub struct TemporalAdjacency {
    /// (n * (l_max + 1)) x n, entries >= 0.
    pub weights: Array,
    pub n_vars: usize,
    pub l_max: usize,
}

impl TemporalAdjacency {
    pub fn new(weights: Array, n_vars: usize, l_max: usize) -> Result<Self> {
        let rows = n_vars * (l_max + 1);
        if weights.shape() != [rows, n_vars] {
            return Err(TtcdError::Shape(format!(
                "adjacency wants ({rows}, {n_vars}), got {:?}",
                weights.shape()
            )));
        }
        weights.ensure_finite("temporal adjacency")?;
        let adj = Self {
            weights,
            n_vars,
            l_max,
        };
        for k in 0..n_vars {
            let w = adj.get(k, 0, k);
            if w != 0.0 {
                return Err(TtcdError::Domain(format!(
                    "contemporaneous self-weight of variable {k} must be 0, got {w}"
                )));
            }
        }
        Ok(adj)
    }

    /// Row index of `(source variable, lag slot)`.
    pub fn encode_row(&self, var: usize, slot: usize) -> usize {
        var * (self.l_max + 1) + slot
    }

    /// Inverse of [`encode_row`](Self::encode_row).
    pub fn decode_row(&self, row: usize) -> (usize, usize) {
        (row / (self.l_max + 1), row % (self.l_max + 1))
    }

    /// Lag slot for an actual lag value (`lag = 0` is contemporaneous).
    pub fn slot_for_lag(&self, lag: usize) -> usize {
        self.l_max - lag
    }

    /// Weight of the edge `src` at `lag` -> `dst`.
    pub fn get(&self, src: usize, lag: usize, dst: usize) -> f64 {
        let row = self.encode_row(src, self.slot_for_lag(lag));
        self.weights.data()[row * self.n_vars + dst]
    }

    /// The n x n contemporaneous block (lag slot `l_max`).
    pub fn contemporaneous_block(&self) -> Array {
        let n = self.n_vars;
        let mut out = vec![0.0; n * n];
        for src in 0..n {
            let row = self.encode_row(src, self.l_max);
            out[src * n..(src + 1) * n]
                .copy_from_slice(&self.weights.data()[row * n..(row + 1) * n]);
        }
        Array::from_vec(vec![n, n], out).expect("square block")
    }

    /// Largest entry.
    pub fn max_weight(&self) -> f64 {
        self.weights.data().iter().cloned().fold(0.0, f64::max)
    }

    /// Dense CSV dump: header `source,<target names>`, row labels
    /// `<var>_lag<l>` (earliest lag first per variable).
    pub fn save_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut out = String::from("source");
        for name in names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for row in 0..self.n_vars * (self.l_max + 1) {
            let (var, slot) = self.decode_row(row);
            let lag = self.l_max - slot;
            out.push_str(&format!("{}_lag{}", names[var], lag));
            for dst in 0..self.n_vars {
                out.push_str(&format!(",{}", self.weights.data()[row * self.n_vars + dst]));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_codec_is_a_bijection() {
        let n = 4;
        let l_max = 4;
        let adj = TemporalAdjacency::new(Array::zeros(&[n * (l_max + 1), n]), n, l_max).unwrap();
        for var in 0..n {
            for slot in 0..=l_max {
                let row = adj.encode_row(var, slot);
                assert_eq!(adj.decode_row(row), (var, slot));
            }
        }
        // all rows distinct and in range
        let rows: std::collections::HashSet<usize> = (0..n)
            .flat_map(|v| (0..=l_max).map(move |s| v * (l_max + 1) + s))
            .collect();
        assert_eq!(rows.len(), n * (l_max + 1));
    }

    #[test]
    fn contemporaneous_block_extraction() {
        let n = 2;
        let l_max = 1;
        // rows: x0 slot0 (lag1), x0 slot1 (lag0), x1 slot0, x1 slot1
        let w = Array::from_vec(
            vec![4, 2],
            vec![
                0.5, 0.1, // x0 lag1
                0.0, 0.9, // x0 lag0
                0.2, 0.3, // x1 lag1
                0.7, 0.0, // x1 lag0
            ],
        )
        .unwrap();
        let adj = TemporalAdjacency::new(w, n, l_max).unwrap();
        let block = adj.contemporaneous_block();
        assert_eq!(block.data(), &[0.0, 0.9, 0.7, 0.0]);
        assert_eq!(adj.get(0, 1, 1), 0.1);
        assert_eq!(adj.get(1, 0, 0), 0.7);
    }

    #[test]
    fn nonzero_self_weight_rejected() {
        let n = 2;
        let w = Array::from_vec(
            vec![4, 2],
            vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        assert!(TemporalAdjacency::new(w, n, 1).is_err());
    }
}
