//! Standalone array operations shared by the model and the tests.

use crate::error::{Result, TtcdError};
use crate::numeric::array::{strides_of, Array};
use crate::numeric::tape::softmax_row;

/// Numerically stable softmax along `axis` (max-shifted exponentials).
/// Outputs along the axis are positive and sum to 1.
pub fn softmax_rows(x: &Array, axis: usize) -> Result<Array> {
    if axis >= x.rank() {
        return Err(TtcdError::Shape(format!(
            "softmax axis {} out of range for shape {:?}",
            axis,
            x.shape()
        )));
    }
    let len = x.shape()[axis];
    if len == 0 {
        return Err(TtcdError::Shape("softmax over empty axis".into()));
    }
    x.ensure_finite("softmax input")?;
    let strides = strides_of(x.shape());
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let stride = strides[axis];
    let mut out = x.data().to_vec();
    let mut lane = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (t, v) in lane.iter_mut().enumerate() {
                *v = out[base + t * stride];
            }
            softmax_row(&mut lane);
            for (t, v) in lane.iter().enumerate() {
                out[base + t * stride] = *v;
            }
        }
    }
    Array::from_vec(x.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_inputs_give_uniform_output() {
        let x = Array::from_vec(vec![3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = softmax_rows(&x, 0).unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance_with_large_inputs() {
        let x = Array::from_vec(vec![2], vec![1000.0, 1000.0]).unwrap();
        let y = softmax_rows(&x, 0).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-15);
        assert!((y.data()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_two_entries() {
        let x = Array::from_vec(vec![2], vec![0.0, 2.0f64.ln()]).unwrap();
        let y = softmax_rows(&x, 0).unwrap();
        assert!((y.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((y.data()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one_on_any_axis() {
        let x = Array::from_vec(
            vec![2, 3, 2],
            vec![5.0, -3.0, 900.0, 1e3, -1e3, 0.0, 2.0, 4.0, 8.0, -7.0, 0.1, 0.2],
        )
        .unwrap();
        for axis in 0..3 {
            let y = softmax_rows(&x, axis).unwrap();
            // sum along the axis must be 1 for every lane
            let shape = y.shape().to_vec();
            let inner: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            for o in 0..outer {
                for i in 0..inner {
                    let mut s = 0.0;
                    for t in 0..shape[axis] {
                        s += y.data()[o * shape[axis] * inner + t * inner + i];
                    }
                    assert!((s - 1.0).abs() <= 1e-12, "axis {axis}: sum {s}");
                }
            }
        }
    }

    #[test]
    fn rejects_empty_axis_and_nonfinite() {
        let x = Array::zeros(&[0]);
        assert!(softmax_rows(&x, 0).is_err());
        let x = Array::from_vec(vec![2], vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax_rows(&x, 0).is_err());
    }
}
