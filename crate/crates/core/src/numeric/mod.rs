//! Dense-array math substrate: arrays, real FFT pair, trace of the
//! matrix exponential, softmax, and a reverse-mode gradient tape.

pub mod array;
pub mod expm;
pub mod fft;
pub mod gradcheck;
pub mod linalg;
pub mod ops;
pub mod tape;

pub use array::Array;
pub use expm::{trace_expm_gap, trace_expm_gap_grad};
pub use fft::{irfft, rfft, rfft_bins, ComplexArray};
pub use gradcheck::check_gradients;
pub use ops::softmax_rows;
pub use tape::{BoundParams, Gradients, ParamSet, Tape, TensorId};
