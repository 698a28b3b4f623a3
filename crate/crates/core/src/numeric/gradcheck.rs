//! Central-difference validation of tape gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TtcdError};
use crate::numeric::tape::{BoundParams, ParamSet, Tape, TensorId};

/// Compares tape gradients of a scalar objective against central finite
/// differences over up to `max_coords` randomly sampled coordinates
/// (seeded). Returns the worst relative error
/// `|analytic - fd| / max(1, |fd|)`.
pub fn check_gradients<F>(
    objective: F,
    params: &ParamSet,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<TensorId>,
{
    let mut tape = Tape::new();
    let bound = tape.bind_params(params);
    let loss = objective(&mut tape, &bound)?;
    let f0 = tape.value(loss).as_scalar()?;
    if !f0.is_finite() {
        return Err(TtcdError::NonFinite("gradient-check objective".into()));
    }
    let grads = tape.backward(loss)?;

    // enumerate all coordinates and sample
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, value) in params.iter() {
        for i in 0..value.len() {
            coords.push((name.to_string(), i));
        }
    }
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_coords);
    }

    let eval_at = |name: &str, i: usize, delta: f64| -> Result<f64> {
        let mut shifted = params.clone();
        shifted
            .get_mut(name)
            .ok_or_else(|| TtcdError::Config(format!("no parameter '{name}'")))?
            .data_mut()[i] += delta;
        let mut t = Tape::new();
        let b = t.bind_params(&shifted);
        let l = objective(&mut t, &b)?;
        let v = t.value(l).as_scalar()?;
        if !v.is_finite() {
            return Err(TtcdError::NonFinite("gradient-check objective".into()));
        }
        Ok(v)
    };

    let mut worst = 0.0f64;
    for (name, i) in &coords {
        let fd = (eval_at(name, *i, eps)? - eval_at(name, *i, -eps)?) / (2.0 * eps);
        let analytic = grads
            .get(name)
            .map(|g| g.data()[*i])
            .unwrap_or(0.0);
        let rel = (analytic - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::array::Array;

    #[test]
    fn quadratic_is_exact() {
        // f(w) = w^2 at w = 3: analytic 6
        let mut p = ParamSet::new();
        p.insert("w", Array::scalar(3.0)).unwrap();
        let err = check_gradients(
            |t, bp| {
                let w = bp.id("w")?;
                t.mul(w, w)
            },
            &p,
            1e-5,
            10,
            0,
        )
        .unwrap();
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn acyclicity_gradient_on_random_matrix() {
        let vals: Vec<f64> = (0..16)
            .map(|i| (((i * 37 + 11) % 19) as f64 / 9.5 - 1.0) * 0.8)
            .collect();
        let mut p = ParamSet::new();
        p.insert("w", Array::from_vec(vec![4, 4], vals).unwrap()).unwrap();
        let err = check_gradients(
            |t, bp| {
                let w = bp.id("w")?;
                t.trace_expm_gap(w)
            },
            &p,
            1e-5,
            16,
            1,
        )
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn nonfinite_objective_is_an_error() {
        let mut p = ParamSet::new();
        p.insert("w", Array::scalar(-1.0)).unwrap();
        let res = check_gradients(
            |t, bp| {
                let w = bp.id("w")?;
                let s = t.sqrt(w)?; // sqrt of a negative -> NaN
                t.sum_all(s)
            },
            &p,
            1e-5,
            4,
            0,
        );
        assert!(res.is_err());
    }
}
