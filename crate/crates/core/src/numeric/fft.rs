//! Real FFT pair used by the frequency-domain attention.
//!
//! Transforms are computed by direct DFT summation. Transform axes in
//! this crate are window lag axes (a handful of samples), so the O(L^2)
//! cost is irrelevant and the direct sum keeps the adjoint (gradient)
//! path trivially correct.
//!
//! Convention: unnormalized forward, 1/L on the inverse.

use crate::error::{Result, TtcdError};
use crate::numeric::array::Array;

/// Complex spectrum stored as separate real/imaginary planes.
#[derive(Debug, Clone)]
pub struct ComplexArray {
    pub shape: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Number of real-FFT bins for a length-`l` signal.
pub fn rfft_bins(l: usize) -> usize {
    l / 2 + 1
}

/// Forward real DFT of `x` along `axis`. Returns `floor(L/2)+1` bins.
pub fn rfft(x: &Array, axis: usize) -> Result<ComplexArray> {
    if axis >= x.rank() {
        return Err(TtcdError::Shape(format!(
            "rfft axis {} out of range for shape {:?}",
            axis,
            x.shape()
        )));
    }
    let l = x.shape()[axis];
    if l < 2 {
        return Err(TtcdError::Shape(format!(
            "rfft axis length must be >= 2, got {}",
            l
        )));
    }
    let bins = rfft_bins(l);
    let mut shape = x.shape().to_vec();
    shape[axis] = bins;
    let total: usize = shape.iter().product();
    let mut re = vec![0.0; total];
    let mut im = vec![0.0; total];

    let (cos_t, sin_t) = dft_tables(l, bins);
    for_each_lane(x.shape(), axis, bins, |lane| {
        for k in 0..bins {
            let (mut sr, mut si) = (0.0, 0.0);
            for t in 0..l {
                let v = x.data()[lane.in_off + t * lane.inner];
                sr += v * cos_t[k * l + t];
                si -= v * sin_t[k * l + t];
            }
            re[lane.out_off + k * lane.inner] = sr;
            im[lane.out_off + k * lane.inner] = si;
        }
    });

    Ok(ComplexArray { shape, re, im })
}

/// cos/sin of `2π k t / L` for k in 0..bins, t in 0..L (row-major k*L+t).
pub(crate) fn dft_tables(l: usize, bins: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cos_t = vec![0.0; bins * l];
    let mut sin_t = vec![0.0; bins * l];
    for k in 0..bins {
        for t in 0..l {
            let ang = 2.0 * std::f64::consts::PI * (k * t) as f64 / l as f64;
            cos_t[k * l + t] = ang.cos();
            sin_t[k * l + t] = ang.sin();
        }
    }
    (cos_t, sin_t)
}

/// Inverse real DFT back to a length-`length` signal along `axis`.
pub fn irfft(spec: &ComplexArray, length: usize, axis: usize) -> Result<Array> {
    if axis >= spec.shape.len() {
        return Err(TtcdError::Shape(format!(
            "irfft axis {} out of range for shape {:?}",
            axis, spec.shape
        )));
    }
    let bins = spec.shape[axis];
    if rfft_bins(length) != bins {
        return Err(TtcdError::Shape(format!(
            "irfft target length {} wants {} bins, spectrum has {}",
            length,
            rfft_bins(length),
            bins
        )));
    }
    let mut shape = spec.shape.clone();
    shape[axis] = length;
    let total: usize = shape.iter().product();
    let mut out = vec![0.0; total];

    // iterate lanes of the spectrum; in_off indexes the spectrum here
    let (cos_t, sin_t) = dft_tables(length, bins);
    let weights: Vec<f64> = (0..bins)
        .map(|k| bin_weight(length, k) / length as f64)
        .collect();
    for_each_lane(&spec.shape, axis, length, |lane| {
        for t in 0..length {
            let mut acc = 0.0;
            for k in 0..bins {
                let re = spec.re[lane.in_off + k * lane.inner];
                let im = spec.im[lane.in_off + k * lane.inner];
                acc += weights[k] * (re * cos_t[k * length + t] - im * sin_t[k * length + t]);
            }
            out[lane.out_off + t * lane.inner] = acc;
        }
    });

    Array::from_vec(shape, out)
}

/// Conjugate-symmetry weight of bin `k` for a length-`l` signal.
pub(crate) fn bin_weight(l: usize, k: usize) -> f64 {
    if k == 0 || (l % 2 == 0 && k == l / 2) {
        1.0
    } else {
        2.0
    }
}

/// Offsets of one 1-D lane: `in_off` into the source array, `out_off`
/// into an array whose `axis` length is `out_axis_len`. Both use stride
/// `inner` along the axis.
struct Lane {
    in_off: usize,
    out_off: usize,
    inner: usize,
}

fn for_each_lane(in_shape: &[usize], axis: usize, out_axis_len: usize, mut f: impl FnMut(Lane)) {
    let outer: usize = in_shape[..axis].iter().product();
    let inner: usize = in_shape[axis + 1..].iter().product();
    let in_axis_len = in_shape[axis];
    for o in 0..outer {
        for i in 0..inner {
            f(Lane {
                in_off: o * in_axis_len * inner + i,
                out_off: o * out_axis_len * inner + i,
                inner,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(len: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        // cheap deterministic values
        let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<f64> = (0..len).map(|_| next() * 4.0).collect();
        let arr = Array::from_vec(vec![len], x.clone()).unwrap();
        let spec = rfft(&arr, 0).unwrap();
        let back = irfft(&spec, len, 0).unwrap();
        (x, back.data().to_vec())
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let c = 2.5;
        let arr = Array::full(&[8], c);
        let spec = rfft(&arr, 0).unwrap();
        assert!((spec.re[0] - 8.0 * c).abs() < 1e-12);
        for k in 1..5 {
            assert!(spec.re[k].abs() < 1e-12, "bin {k} re");
            assert!(spec.im[k].abs() < 1e-12, "bin {k} im");
        }
    }

    #[test]
    fn pure_cosine_hits_single_bin() {
        let l = 16;
        let k0 = 3;
        let x: Vec<f64> = (0..l)
            .map(|t| (2.0 * std::f64::consts::PI * (k0 * t) as f64 / l as f64).cos())
            .collect();
        let spec = rfft(&Array::from_vec(vec![l], x).unwrap(), 0).unwrap();
        for k in 0..rfft_bins(l) {
            let mag = (spec.re[k].powi(2) + spec.im[k].powi(2)).sqrt();
            if k == k0 {
                assert!((mag - l as f64 / 2.0).abs() < 1e-10);
            } else {
                assert!(mag < 1e-10, "bin {k} leaked {mag}");
            }
        }
    }

    #[test]
    fn roundtrip_all_lengths_2_to_64() {
        for len in 2..=64 {
            let (x, back) = roundtrip(len, len as u64);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10, "len {len}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn roundtrip_length_5() {
        let (x, back) = roundtrip(5, 42);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn irfft_rejects_bin_mismatch() {
        let arr = Array::full(&[8], 1.0);
        let spec = rfft(&arr, 0).unwrap();
        assert!(irfft(&spec, 11, 0).is_err());
    }

    #[test]
    fn middle_axis_transform() {
        // (2, 6, 3): transform over axis 1, constant lanes
        let mut data = vec![0.0; 36];
        for b in 0..2 {
            for t in 0..6 {
                for c in 0..3 {
                    data[b * 18 + t * 3 + c] = (b * 3 + c) as f64;
                }
            }
        }
        let arr = Array::from_vec(vec![2, 6, 3], data).unwrap();
        let spec = rfft(&arr, 1).unwrap();
        assert_eq!(spec.shape, vec![2, 4, 3]);
        let back = irfft(&spec, 6, 1).unwrap();
        for (a, b) in arr.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
