use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ParsedSentence;
use crate::error::{Error, Result};

/// Sentence-length buckets with closed upper bounds: `[1,10]`, `(10,25]`,
/// `(25,50]`, `(50,∞)`.
pub const LENGTH_BUCKETS: [&str; 4] = ["1-10", "10-25", "25-50", "50+"];

pub fn length_bucket(len: usize) -> usize {
    match len {
        0..=10 => 0,
        11..=25 => 1,
        26..=50 => 2,
        _ => 3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_classes: usize,
    pub classes: Vec<String>,
    pub n_sentences: usize,
    pub n_entities: usize,
    /// Percentage of sentences per [`LENGTH_BUCKETS`] entry.
    pub length_histogram: [f64; 4],
}

pub fn compute_stats(corpus: &[ParsedSentence]) -> Result<DatasetStats> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot compute statistics of an empty corpus".into()));
    }
    let mut counts = [0usize; 4];
    let mut classes = BTreeSet::new();
    let mut n_entities = 0;
    for s in corpus {
        counts[length_bucket(s.len())] += 1;
        n_entities += s.mentions.len();
        classes.extend(s.mentions.iter().map(|m| m.label.clone()));
    }
    let n = corpus.len() as f64;
    Ok(DatasetStats {
        n_classes: classes.len(),
        classes: classes.into_iter().collect(),
        n_sentences: corpus.len(),
        n_entities,
        length_histogram: counts.map(|c| 100.0 * c as f64 / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityMention;

    fn sent(len: usize) -> ParsedSentence {
        ParsedSentence::new((0..len).map(|i| format!("w{i}")).collect(), vec![EntityMention::new(0, 0, "X")]).unwrap()
    }

    #[test]
    fn single_short_sentence() {
        let s = compute_stats(&[sent(5)]).unwrap();
        assert_eq!(s.length_histogram, [100.0, 0.0, 0.0, 0.0]);
        assert_eq!((s.n_sentences, s.n_entities, s.n_classes), (1, 1, 1));
    }

    #[test]
    fn boundaries_are_closed_above() {
        assert_eq!(length_bucket(1), 0);
        assert_eq!(length_bucket(10), 0);
        assert_eq!(length_bucket(11), 1);
        assert_eq!(length_bucket(25), 1);
        assert_eq!(length_bucket(26), 2);
        assert_eq!(length_bucket(50), 2);
        assert_eq!(length_bucket(51), 3);
    }

    #[test]
    fn histogram_sums_to_100() {
        let corpus: Vec<_> = [3, 10, 11, 30, 60, 7, 25].into_iter().map(sent).collect();
        let s = compute_stats(&corpus).unwrap();
        assert!((s.length_histogram.iter().sum::<f64>() - 100.0).abs() < 0.01);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(compute_stats(&[]).is_err());
    }
}
