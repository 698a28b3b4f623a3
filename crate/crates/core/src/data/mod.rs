//! Dataset representation, sliding windows, normalization statistics,
//! and the temporal adjacency/graph types shared by all modules.

pub mod adjacency;
pub mod dataset;
pub mod graph;
pub mod windows;

pub use adjacency::TemporalAdjacency;
pub use dataset::{compute_norm, denormalize, load_csv, normalize, NormStats, TimeSeriesDataset};
pub use graph::{Edge, TemporalGraph};
pub use windows::{make_windows, WindowBatch};
