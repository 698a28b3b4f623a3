//! First-order adaptive gradient optimizer (Adam).

use std::collections::HashMap;

use crate::error::{Result, TtcdError};
use crate::numeric::tape::{Gradients, ParamSet};

/// Adam with bias correction. State is keyed by parameter name and
/// allocated lazily on the first step.
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Applies one update. Parameters with exactly-zero gradients keep
    /// exactly-zero moments and are left untouched, so masked weights
    /// never drift.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let g = grads
                .get(&name)
                .ok_or_else(|| TtcdError::Config(format!("no gradient for '{name}'")))?;
            let value = params.get_mut(&name).expect("iterated name exists");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; value.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; value.len()]);
            let data = value.data_mut();
            for i in 0..data.len() {
                let gi = g.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            if !data.iter().all(|x| x.is_finite()) {
                return Err(TtcdError::NonFinite(format!("parameter '{name}'")));
            }
        }
        Ok(())
    }
}
