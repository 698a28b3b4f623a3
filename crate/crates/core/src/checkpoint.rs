//! Versioned parameter checkpoints.
//!
//! Format: JSON `{"format": "ttcd-params", "version": 1, "params":
//! [{"name": ..., "shape": [...], "values": [...]}, ...]}` with entries
//! in registration order. Values are full-precision `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TtcdError};
use crate::numeric::{Array, ParamSet};

const FORMAT: &str = "ttcd-params";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    params: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Writes all parameters to `path`.
pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format: FORMAT.into(),
        version: VERSION,
        params: params
            .iter()
            .map(|(name, value)| Entry {
                name: name.to_string(),
                shape: value.shape().to_vec(),
                values: value.data().to_vec(),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string(&file).expect("checkpoint serializes"))?;
    Ok(())
}

/// Loads a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<ParamSet> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| TtcdError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if file.format != FORMAT {
        return Err(TtcdError::Parse {
            line: 1,
            msg: format!("not a {FORMAT} file (format = '{}')", file.format),
        });
    }
    if file.version != VERSION {
        return Err(TtcdError::Parse {
            line: 1,
            msg: format!("unsupported checkpoint version {}", file.version),
        });
    }
    let mut params = ParamSet::new();
    for entry in file.params {
        params.insert(&entry.name, Array::from_vec(entry.shape, entry.values)?)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_names_shapes_values() {
        let mut params = ParamSet::new();
        params
            .insert("a.w", Array::from_vec(vec![2, 3], vec![0.5, -1.25, 3.0, 0.0, 9.5, -2.125]).unwrap())
            .unwrap();
        params.insert("a.b", Array::scalar(0.125)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save(&params, f.path()).unwrap();
        let loaded = load(f.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get("a.w").unwrap().data(), params.get("a.w").unwrap().data());
        assert_eq!(loaded.get("a.b").unwrap().shape(), &[] as &[usize]);
    }

    #[test]
    fn rejects_wrong_format_and_version() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), r#"{"format":"other","version":1,"params":[]}"#).unwrap();
        assert!(load(f.path()).is_err());
        std::fs::write(f.path(), r#"{"format":"ttcd-params","version":99,"params":[]}"#).unwrap();
        assert!(load(f.path()).is_err());
    }
}
