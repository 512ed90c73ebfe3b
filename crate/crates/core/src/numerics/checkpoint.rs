//! JSON checkpoints: `name → shape → row-major values`.
//!
//! Values are written with shortest round-trip formatting and parsed with
//! correctly rounded float parsing, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "deptrigger-params";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            seed: store.seed(),
            tensors: store
                .entries()
                .map(|(name, m)| TensorRecord {
                    name: name.to_string(),
                    shape: [m.rows(), m.cols()],
                    values: m.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_store(self) -> Result<ParamStore> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Argument(format!(
                "not a parameter checkpoint (format `{}`)",
                self.format
            )));
        }
        let mut store = ParamStore::new(self.seed);
        for t in self.tensors {
            let m = Matrix::from_vec(t.shape[0], t.shape[1], t.values)?;
            store.add(t.name, m)?;
        }
        Ok(store)
    }
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_store(store))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_store()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            bits in proptest::collection::vec(any::<u64>(), 1..40),
        ) {
            let values: Vec<f64> = bits
                .into_iter()
                .map(f64::from_bits)
                .filter(|x| x.is_finite())
                .collect();
            prop_assume!(!values.is_empty());
            let mut store = ParamStore::new(5);
            store.add("layer.w", Matrix::row_vector(&values)).unwrap();
            store.add("layer.b", Matrix::column_vector(&values)).unwrap();
            let json = serde_json::to_string(&Checkpoint::from_store(&store)).unwrap();
            let back: Checkpoint = serde_json::from_str(&json).unwrap();
            let restored = back.into_store().unwrap();
            prop_assert_eq!(restored.content_hash(), store.content_hash());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let mut store = ParamStore::new(1);
        store.add("a", Matrix::row_vector(&[0.1, -0.0, 1e-300, 123456.789])).unwrap();
        save_params(&store, &path).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back.content_hash(), store.content_hash());
        assert_eq!(back.seed(), 1);
    }
}
