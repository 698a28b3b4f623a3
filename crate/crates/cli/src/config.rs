//! Flat key=value run configuration.
//!
//! A config file holds one `key = value` pair per line (`#` starts a
//! comment). Command-line flags override file values; the effective
//! config is echoed into every output artifact so a run can be
//! reproduced bit-for-bit from any artifact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ttcd_core::error::{Result, TtcdError};
use ttcd_core::train::HyperParams;

/// Effective run configuration for `discover`/`ablate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_lag: usize,
    pub variant: String,
    pub lambda1: f64,
    pub alpha: f64,
    pub rho: f64,
    pub lr: f64,
    pub epochs: usize,
    pub max_rounds: usize,
    pub h_tol: f64,
    pub omega: f64,
    pub seed: u64,
    pub d_e: usize,
    pub hidden_channels: usize,
    pub warmup_epochs: usize,
    pub prune_lr: Option<f64>,
    pub two_stage: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        Self {
            max_lag: 5,
            variant: "full".into(),
            lambda1: hp.lambda1,
            alpha: hp.alpha,
            rho: hp.rho,
            lr: hp.lr,
            epochs: hp.epochs,
            max_rounds: hp.max_rounds,
            h_tol: hp.h_tol,
            omega: hp.omega,
            seed: hp.seed,
            d_e: hp.d_e,
            hidden_channels: hp.hidden_channels,
            warmup_epochs: hp.warmup_epochs,
            prune_lr: hp.prune_lr,
            two_stage: hp.two_stage,
        }
    }
}

impl RunConfig {
    pub fn hyperparams(&self) -> HyperParams {
        HyperParams {
            lambda1: self.lambda1,
            alpha: self.alpha,
            rho: self.rho,
            lr: self.lr,
            epochs: self.epochs,
            max_rounds: self.max_rounds,
            h_tol: self.h_tol,
            omega: self.omega,
            seed: self.seed,
            d_e: self.d_e,
            hidden_channels: self.hidden_channels,
            warmup_epochs: self.warmup_epochs,
            prune_lr: self.prune_lr,
            two_stage: self.two_stage,
        }
    }

    /// Applies `key = value` pairs from a config file. Unknown keys are
    /// rejected.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| TtcdError::Parse {
                line: lineno + 1,
                msg: format!("expected key=value, got '{line}'"),
            })?;
            self.apply_pair(key.trim(), value.trim())
                .map_err(|e| TtcdError::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                TtcdError::Config(format!("invalid value '{value}' for key '{key}'"))
            })
        }
        match key {
            "max_lag" => self.max_lag = parse(key, value)?,
            "variant" => self.variant = value.to_string(),
            "lambda1" => self.lambda1 = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_rounds" => self.max_rounds = parse(key, value)?,
            "h_tol" => self.h_tol = parse(key, value)?,
            "omega" => self.omega = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "d_e" => self.d_e = parse(key, value)?,
            "hidden_channels" => self.hidden_channels = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "prune_lr" => {
                self.prune_lr = if value == "none" || value == "null" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "two_stage" => self.two_stage = parse(key, value)?,
            other => {
                return Err(TtcdError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Renders the config in the key=value file format.
    pub fn to_kv(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        let map: BTreeMap<String, serde_json::Value> =
            serde_json::from_value(json).expect("config is a flat map");
        let mut out = String::new();
        for (k, v) in map {
            let v = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Null => "none".into(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_overrides_and_unknown_keys() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nlambda1 = 0.5\nseed=9\nvariant = no-dsb").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(f.path()).unwrap();
        assert_eq!(cfg.lambda1, 0.5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.variant, "no-dsb");

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "bogus_key = 1").unwrap();
        let err = RunConfig::default().apply_file(f.path()).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn kv_roundtrip_reproduces_config() {
        let mut cfg = RunConfig::default();
        cfg.seed = 1234;
        cfg.omega = 0.007;
        cfg.two_stage = true;
        let kv = cfg.to_kv();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(kv.as_bytes()).unwrap();
        let mut cfg2 = RunConfig::default();
        cfg2.apply_file(f.path()).unwrap();
        assert_eq!(serde_json::to_string(&cfg).unwrap(), serde_json::to_string(&cfg2).unwrap());
    }
}
