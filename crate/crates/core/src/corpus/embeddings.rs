use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Word vectors plus an UNK row (mean of all vectors) and a PAD row (zeros),
/// stored after the vocabulary rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    words: Vec<String>,
    #[serde(skip)]
    vocabulary: HashMap<String, usize>,
    vectors: Matrix,
    lowercase_fallback: bool,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` rows. Duplicate words keep the
    /// first vector.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, dim: usize, lowercase_fallback: bool) -> Result<Self> {
        let mut words = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity((rows.len() + 2) * dim);
        let mut vocabulary = HashMap::with_capacity(rows.len());
        for (word, v) in rows {
            if v.len() != dim {
                return Err(Error::Shape(format!("vector for `{word}` has {} dims, expected {dim}", v.len())));
            }
            if vocabulary.contains_key(&word) {
                continue;
            }
            vocabulary.insert(word.clone(), words.len());
            words.push(word);
            data.extend(v);
        }
        let n = words.len();
        let mut unk = vec![0.0; dim];
        if n > 0 {
            for r in 0..n {
                for (u, x) in unk.iter_mut().zip(&data[r * dim..(r + 1) * dim]) {
                    *u += x;
                }
            }
            unk.iter_mut().for_each(|u| *u /= n as f64);
        }
        data.extend(unk);
        data.extend(std::iter::repeat_n(0.0, dim));
        Ok(EmbeddingTable {
            words,
            vocabulary,
            vectors: Matrix::from_vec(n + 2, dim, data)?,
            lowercase_fallback,
        })
    }

    /// Seeded random vectors, `U(-sqrt(3/dim), sqrt(3/dim))` per entry, for
    /// the given vocabulary (used when no pretrained vectors are supplied).
    pub fn random<'a>(words: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64, lowercase_fallback: bool) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (3.0 / dim.max(1) as f64).sqrt();
        let rows = words
            .into_iter()
            .map(|w| {
                let v = (0..dim).map(|_| rng.random_range(-bound..=bound)).collect();
                (w.to_string(), v)
            })
            .collect();
        Self::from_rows(rows, dim, lowercase_fallback)
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.vocabulary = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn unk_row(&self) -> usize {
        self.words.len()
    }

    pub fn pad_row(&self) -> usize {
        self.words.len() + 1
    }

    /// Exact match, then lowercase when enabled, then UNK.
    pub fn row_of(&self, word: &str) -> usize {
        if let Some(&i) = self.vocabulary.get(word) {
            return i;
        }
        if self.lowercase_fallback {
            let lower = word.to_lowercase();
            if let Some(&i) = self.vocabulary.get(&lower) {
                return i;
            }
        }
        self.unk_row()
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        self.vectors.row(row)
    }

    pub fn lookup(&self, word: &str) -> &[f64] {
        self.vector(self.row_of(word))
    }

    /// `L × dim` matrix of the words' vectors.
    pub fn embed<S: AsRef<str>>(&self, words: &[S]) -> Matrix {
        let dim = self.dim();
        let mut out = Matrix::zeros(words.len(), dim);
        for (i, w) in words.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.lookup(w.as_ref()));
        }
        out
    }

    /// Keeps only rows for words in `keep` (plus UNK/PAD, which are
    /// retained as computed over the full table).
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Self {
        let dim = self.dim();
        let mut words = Vec::new();
        let mut data = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in keep {
            let row = self.row_of(w);
            if row == self.unk_row() {
                continue;
            }
            let stored = &self.words[row];
            if seen.insert(stored.clone()) {
                words.push(stored.clone());
                data.extend_from_slice(self.vector(row));
            }
        }
        data.extend_from_slice(self.vector(self.unk_row()));
        data.extend_from_slice(self.vector(self.pad_row()));
        let mut t = EmbeddingTable {
            vectors: Matrix::from_vec(words.len() + 2, dim, data).expect("consistent"),
            words,
            vocabulary: HashMap::new(),
            lowercase_fallback: self.lowercase_fallback,
        };
        t.rebuild_index();
        t
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut t: EmbeddingTable = serde_json::from_str(&text)?;
        t.rebuild_index();
        Ok(t)
    }
}

/// Reads whitespace-separated text vectors: a token followed by `dim`
/// floats per line.
pub fn load_embeddings(path: &Path, dim: usize, lowercase_fallback: bool) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line");
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::parse(path, i + 1, format!("expected {dim} values, found {}", values.len())));
        }
        let v = values
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(path, i + 1, format!("bad value `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((word.to_string(), v));
    }
    EmbeddingTable::from_rows(rows, dim, lowercase_fallback)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn fixture(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_words_give_four_rows() {
        let f = fixture("the 0.5 1.0 -1.0\nalice 1.5 -2.0 0.0\n");
        let t = load_embeddings(f.path(), 3, true).unwrap();
        assert_eq!(t.vocab_size() + 2, 4);
        assert_eq!(t.unk_row(), 2);
        assert_eq!(t.pad_row(), 3);
        // oracle: elementwise mean of the two vectors
        assert_eq!(t.vector(t.unk_row()), &[1.0, -0.5, -0.5]);
        assert_eq!(t.vector(t.pad_row()), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn lookup_policy() {
        let f = fixture("the 0.5 1.0 -1.0\nalice 1.5 -2.0 0.0\n");
        let t = load_embeddings(f.path(), 3, true).unwrap();
        assert_eq!(t.lookup("Alice"), &[1.5, -2.0, 0.0]);
        assert_eq!(t.row_of("Bob"), t.unk_row());
        let strict = load_embeddings(f.path(), 3, false).unwrap();
        assert_eq!(strict.row_of("Alice"), strict.unk_row());
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let f = fixture("a 1 2 3\nb 1 2\n");
        let err = load_embeddings(f.path(), 3, true).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn restrict_and_persist() {
        let t = EmbeddingTable::random(["a", "b", "c"], 4, 1, true).unwrap();
        let r = t.restrict(["c", "A", "zzz"]);
        assert_eq!(r.vocab_size(), 2);
        assert_eq!(r.lookup("c"), t.lookup("c"));
        assert_eq!(r.lookup("a"), t.lookup("a"));
        assert_eq!(r.vector(r.unk_row()), t.vector(t.unk_row()));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.json");
        r.save(&p).unwrap();
        let back = EmbeddingTable::load(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.row_of("c"), r.row_of("c"));
    }
}
