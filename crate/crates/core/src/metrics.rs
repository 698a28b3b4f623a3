//! Full-temporal-graph scoring: SHD, F1 and FDR over directed,
//! lag-typed edges.
//!
//! Edges are compared as exact `(src, lag, dst)` triples, so both the
//! direction and the time lag must match. SHD counts insertions plus
//! deletions only; a reversed contemporaneous edge therefore costs 2.

use serde::{Deserialize, Serialize};

use crate::data::TemporalGraph;
use crate::error::{Result, TtcdError};

/// Score of a predicted graph against ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreCard {
    pub shd: usize,
    pub f1: f64,
    pub fdr: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// True when the prediction had no edges (f1 and fdr forced to 0).
    pub empty_prediction: bool,
}

/// Scores `pred` against `truth`. Both graphs must share the variable
/// set and `max_lag`.
pub fn score(pred: &TemporalGraph, truth: &TemporalGraph) -> Result<ScoreCard> {
    if pred.variables != truth.variables {
        return Err(TtcdError::Domain(
            "graphs have different variable sets".into(),
        ));
    }
    if pred.max_lag != truth.max_lag {
        return Err(TtcdError::Domain(format!(
            "graphs have different max_lag: {} vs {}",
            pred.max_lag, truth.max_lag
        )));
    }
    let p = pred.edge_triples();
    let t = truth.edge_triples();
    let tp = p.intersection(&t).count();
    let fp = p.len() - tp;
    let fn_ = t.len() - tp;

    let empty_prediction = p.is_empty();
    let f1 = if empty_prediction || tp == 0 {
        0.0
    } else {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        2.0 * precision * recall / (precision + recall)
    };
    let fdr = if empty_prediction {
        0.0
    } else {
        fp as f64 / (fp + tp) as f64
    };
    Ok(ScoreCard {
        shd: fp + fn_,
        f1,
        fdr,
        tp,
        fp,
        fn_,
        empty_prediction,
    })
}
