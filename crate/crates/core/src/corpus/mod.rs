//! Corpus ingestion: column-format entity corpora, CoNLL-U parses, word
//! embeddings, per-entity training instances and dataset statistics.

mod column;
mod conllu;
mod embeddings;
mod instance;
mod sample;
mod stats;
pub mod tags;

use serde::{Deserialize, Serialize};

pub use column::{read_column_corpus, read_column_str, write_column_corpus, ReadOptions};
pub use conllu::{align_parses, read_conllu_parses, read_conllu_str, write_conllu, DependencyParse};
pub use embeddings::{load_embeddings, EmbeddingTable};
pub use instance::{
    negative_instance, read_instances, replicate_per_entity, write_instances, TrainingInstance,
    TRIGGER_TAG,
};
pub use sample::{sample_fraction, sample_indices};
pub use stats::{compute_stats, length_bucket, DatasetStats, LENGTH_BUCKETS};
pub use tags::TagScheme;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub index: usize,
}

/// An entity span with inclusive token bounds.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntityMention {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        EntityMention {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub tokens: Vec<Token>,
    pub mentions: Vec<EntityMention>,
    pub edges: Vec<DependencyEdge>,
}

impl ParsedSentence {
    /// Builds a sentence from surface forms and mentions, checking that
    /// mentions are in range and do not overlap. Mentions are sorted.
    pub fn new(words: Vec<String>, mut mentions: Vec<EntityMention>) -> Result<Self> {
        let n = words.len();
        mentions.sort();
        for (i, m) in mentions.iter().enumerate() {
            if m.start > m.end || m.end >= n {
                return Err(Error::Argument(format!(
                    "mention {}..={} out of range for {n} tokens",
                    m.start, m.end
                )));
            }
            if m.label.is_empty() {
                return Err(Error::Argument("mention with empty label".into()));
            }
            if i > 0 && mentions[i - 1].end >= m.start {
                return Err(Error::Argument(format!(
                    "mentions {:?} and {:?} overlap",
                    mentions[i - 1],
                    m
                )));
            }
        }
        let tokens = words
            .into_iter()
            .enumerate()
            .map(|(index, surface)| Token { surface, index })
            .collect();
        Ok(ParsedSentence {
            tokens,
            mentions,
            edges: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    /// Replaces the edge list after validating every endpoint.
    pub fn set_edges(&mut self, edges: Vec<DependencyEdge>) -> Result<()> {
        let n = self.len();
        for e in &edges {
            if e.head >= n || e.dependent >= n {
                return Err(Error::Argument(format!(
                    "edge {}→{} out of range for {n} tokens",
                    e.head, e.dependent
                )));
            }
            if e.head == e.dependent {
                return Err(Error::Argument(format!("self-loop on token {}", e.head)));
            }
            if e.relation.is_empty() {
                return Err(Error::Argument("edge with empty relation".into()));
            }
        }
        self.edges = edges;
        Ok(())
    }
}
