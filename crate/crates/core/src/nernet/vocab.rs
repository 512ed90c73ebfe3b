use serde::{Deserialize, Serialize};

use super::crf::{start_index, stop_index};
use crate::corpus::tags::{bioes_transition_allowed, OUTSIDE};
use crate::error::{Error, Result};

/// BIOES tag inventory: `O` first, then `B-`, `I-`, `E-`, `S-` per class in
/// the given order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocabulary {
    tags: Vec<String>,
}

impl TagVocabulary {
    pub fn from_classes<S: AsRef<str>>(classes: &[S]) -> Result<Self> {
        let mut tags = vec![OUTSIDE.to_string()];
        for c in classes {
            let c = c.as_ref();
            if c.is_empty() || c.chars().any(char::is_whitespace) {
                return Err(Error::Argument(format!("bad class name `{c}`")));
            }
            for p in ["B", "I", "E", "S"] {
                let t = format!("{p}-{c}");
                if tags.contains(&t) {
                    return Err(Error::Argument(format!("duplicate class `{c}`")));
                }
                tags.push(t);
            }
        }
        Ok(TagVocabulary { tags })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn encode<S: AsRef<str>>(&self, tags: &[S]) -> Result<Vec<usize>> {
        tags.iter()
            .map(|t| {
                self.id(t.as_ref())
                    .ok_or_else(|| Error::Argument(format!("tag `{}` not in the vocabulary", t.as_ref())))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tags[i].clone()).collect()
    }

    /// `(K+2) × (K+2)` mask of BIOES-legal transitions including START and
    /// STOP.
    pub fn transition_mask(&self) -> Vec<Vec<bool>> {
        let k = self.len();
        let name = |i: usize| -> Option<&str> {
            if i < k {
                Some(self.tags[i].as_str())
            } else {
                None
            }
        };
        let mut mask = vec![vec![false; k + 2]; k + 2];
        for (from, row) in mask.iter_mut().enumerate() {
            for (to, cell) in row.iter_mut().enumerate() {
                if from == stop_index(k) || to == start_index(k) {
                    continue;
                }
                if from == start_index(k) && to == stop_index(k) {
                    continue;
                }
                *cell = bioes_transition_allowed(name(from), name(to));
            }
        }
        mask
    }
}
