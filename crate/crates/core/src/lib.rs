//! Temporal causal discovery for non-stationary multivariate time series.
//!
//! The pipeline learns a full temporal causal graph — lagged and
//! contemporaneous edges — by jointly training a non-stationary feature
//! learner (transformer encoder/decoder with de-stationary and frequency
//! attention) and a per-variable causal structure learner under an
//! acyclicity-constrained, sparsity-penalized objective. The crate also
//! ships seeded synthetic benchmark generators, ADF/KPSS stationarity
//! tests, and graph scoring (SHD / F1 / FDR).

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod numeric;
pub mod stationarity;
pub mod structure;
pub mod synth;
pub mod train;

pub use data::{NormStats, TemporalAdjacency, TemporalGraph, TimeSeriesDataset, WindowBatch};
pub use error::{Result, TtcdError};
pub use numeric::{Array, ParamSet, Tape};
