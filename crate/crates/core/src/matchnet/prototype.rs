use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matcher::{EncoderView, MatchExample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeEntry {
    pub vector: Vec<f64>,
    pub sentence_id: usize,
    pub label: String,
}

/// Trigger representations of the training set, searched by exact L2
/// linear scan.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrototypeTable {
    pub dim: usize,
    pub entries: Vec<PrototypeEntry>,
}

impl PrototypeTable {
    pub fn new(dim: usize) -> Self {
        PrototypeTable { dim, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: PrototypeEntry) -> Result<()> {
        if entry.vector.len() != self.dim {
            return Err(Error::Shape(format!("prototype of width {} in table of width {}", entry.vector.len(), self.dim)));
        }
        if entry.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("prototype for sentence {}", entry.sentence_id)));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Nearest entry by squared L2 distance; ties go to the lowest index.
    pub fn retrieve(&self, query: &[f64]) -> Result<(usize, f64)> {
        if self.entries.is_empty() {
            return Err(Error::Empty("prototype table".into()));
        }
        if query.len() != self.dim {
            return Err(Error::Shape(format!("query of width {} for table of width {}", query.len(), self.dim)));
        }
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let d: f64 = e.vector.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: PrototypeTable = serde_json::from_str(&text)?;
        for e in &t.entries {
            if e.vector.len() != t.dim {
                return Err(Error::Shape(format!("{}: entry width {} in table of width {}", path.display(), e.vector.len(), t.dim)));
            }
        }
        Ok(t)
    }
}

/// Encodes each example's triggers (no dropout) into a table.
pub fn build_prototype(view: EncoderView<'_>, examples: &[MatchExample]) -> Result<PrototypeTable> {
    let mut table = PrototypeTable::new(view.output_size());
    for ex in examples {
        let vector = view.trigger_values(&ex.embedded, &ex.triggers)?;
        table.push(PrototypeEntry {
            vector,
            sentence_id: ex.sentence_id,
            label: ex.label.clone(),
        })?;
    }
    Ok(table)
}
