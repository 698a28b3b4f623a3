//! Sliding-window construction over a dataset.

use crate::data::dataset::TimeSeriesDataset;
use crate::error::{Result, TtcdError};
use crate::numeric::Array;

/// Stride-1 sliding windows of length `l_max + 1`; the last row of each
/// window is its "current time" slice.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// (N_w, l_max + 1, n)
    pub windows: Array,
    pub l_max: usize,
    /// Dataset index of the first window's end timestep (= l_max).
    pub origin: usize,
}

impl WindowBatch {
    /// Number of windows.
    pub fn count(&self) -> usize {
        self.windows.shape()[0]
    }

    /// Window length `l_max + 1`.
    pub fn window_len(&self) -> usize {
        self.windows.shape()[1]
    }

    pub fn n_vars(&self) -> usize {
        self.windows.shape()[2]
    }

    /// The current-time slice of every window as an (N_w, n) array.
    pub fn last_rows(&self) -> Array {
        let (nw, l, n) = (self.count(), self.window_len(), self.n_vars());
        let mut out = vec![0.0; nw * n];
        for w in 0..nw {
            let src = (w * l + (l - 1)) * n;
            out[w * n..(w + 1) * n].copy_from_slice(&self.windows.data()[src..src + n]);
        }
        Array::from_vec(vec![nw, n], out).expect("shape consistent")
    }
}

/// Cuts a dataset into `T - l_max` stride-1 windows of length `l_max + 1`.
/// At least one full window must fit; training additionally requires
/// `T >= l_max + 2` (at least two windows), which the trainer checks.
pub fn make_windows(ds: &TimeSeriesDataset, l_max: usize) -> Result<WindowBatch> {
    let t = ds.len();
    if l_max < 1 || l_max + 1 > t {
        return Err(TtcdError::Config(format!(
            "l_max must satisfy 1 <= l_max <= T-1 (T = {t}, l_max = {l_max})"
        )));
    }
    let n = ds.n_vars();
    let len = l_max + 1;
    let nw = t - l_max;
    let mut out = vec![0.0; nw * len * n];
    for w in 0..nw {
        for r in 0..len {
            let src = (w + r) * n;
            let dst = (w * len + r) * n;
            out[dst..dst + n].copy_from_slice(&ds.data().data()[src..src + n]);
        }
    }
    Ok(WindowBatch {
        windows: Array::from_vec(vec![nw, len, n], out)?,
        l_max,
        origin: l_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(t: usize, n: usize) -> TimeSeriesDataset {
        let vals: Vec<f64> = (0..t * n).map(|i| i as f64).collect();
        TimeSeriesDataset::new(
            (0..n).map(|i| format!("x{i}")).collect(),
            Array::from_vec(vec![t, n], vals).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn window_count_and_shape() {
        let ds = toy(10, 3);
        let wb = make_windows(&ds, 4).unwrap();
        assert_eq!(wb.count(), 6);
        assert_eq!(wb.windows.shape(), &[6, 5, 3]);
    }

    #[test]
    fn first_window_is_first_rows() {
        let ds = toy(10, 3);
        let wb = make_windows(&ds, 4).unwrap();
        for r in 0..5 {
            for v in 0..3 {
                assert_eq!(wb.windows.at(&[0, r, v]), ds.at(r, v));
            }
        }
    }

    #[test]
    fn boundary_single_window() {
        let ds = toy(5, 2);
        let wb = make_windows(&ds, 4).unwrap();
        assert_eq!(wb.count(), 1);
    }

    #[test]
    fn l_max_out_of_range() {
        let ds = toy(5, 2);
        assert!(make_windows(&ds, 0).is_err());
        assert!(make_windows(&ds, 5).is_err());
    }

    #[test]
    fn last_rows_reconstruct_tail_of_dataset() {
        let ds = toy(12, 2);
        let wb = make_windows(&ds, 3).unwrap();
        let last = wb.last_rows();
        for w in 0..wb.count() {
            for v in 0..2 {
                assert_eq!(last.at(&[w, v]), ds.at(w + 3, v));
            }
        }
    }
}
