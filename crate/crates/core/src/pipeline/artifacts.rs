use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::version_stamp;
use crate::corpus::EmbeddingTable;
use crate::depgraph::AnnotationSummary;
use crate::error::{Error, Result};
use crate::matchnet::{MatchConfig, MatcherEpoch, PrototypeTable};
use crate::nernet::{NerConfig, NerEpoch, TagVocabulary};
use crate::numerics::Checkpoint;

pub const INSTANCES: &str = "instances.jsonl";
pub const ANNOTATION: &str = "annotation.json";
pub const EMBEDDINGS: &str = "embeddings.json";
pub const MATCHER: &str = "matcher.json";
pub const PROTOTYPE: &str = "prototype.json";
pub const NER: &str = "ner.json";
/// Prototype re-encoded with the shared encoder (merge mode only).
pub const NER_PROTOTYPE: &str = "ner_prototype.json";
pub const PREDICTIONS: &str = "predictions.txt";
pub const REPORT: &str = "report.json";

/// Provenance written into every artifact: the config hash that produced
/// it and SHA-256 digests of the artifact files it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub version: String,
    pub config_hash: String,
    pub upstream: BTreeMap<String, String>,
}

impl Header {
    pub fn new(kind: &str, config_hash: &str, dir: &Path, upstream: &[&str]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for name in upstream {
            map.insert(name.to_string(), file_sha256(&dir.join(name))?);
        }
        Ok(Header {
            kind: kind.to_string(),
            version: version_stamp(),
            config_hash: config_hash.to_string(),
            upstream: map,
        })
    }

    /// Fails unless the config hash matches and every upstream file still
    /// has the recorded digest.
    pub fn verify(&self, config_hash: &str, dir: &Path) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::HashMismatch(format!(
                "{} was produced with config {} but the current config is {}",
                self.kind, self.config_hash, config_hash
            )));
        }
        for (name, digest) in &self.upstream {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::HashMismatch(format!("{} was built from {name}, which no longer exists", self.kind)));
            }
            if &file_sha256(&path)? != digest {
                return Err(Error::HashMismatch(format!("{name} changed after {} was built from it", self.kind)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationArtifact {
    pub header: Header,
    /// Entity classes of the full training corpus, sorted.
    pub classes: Vec<String>,
    pub corpus_sentences: usize,
    pub sampled_sentences: Vec<usize>,
    pub instances: usize,
    pub matcher_instances: usize,
    pub summary: AnnotationSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingArtifact {
    pub header: Header,
    pub source: String,
    pub table: EmbeddingTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherArtifact {
    pub header: Header,
    pub config: MatchConfig,
    pub params_hash: String,
    pub epochs: Vec<MatcherEpoch>,
    pub params: Checkpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeArtifact {
    pub header: Header,
    pub params_hash: String,
    pub table: PrototypeTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerArtifact {
    pub header: Header,
    pub config: NerConfig,
    pub tags: TagVocabulary,
    pub matcher_hash: String,
    pub epochs: Vec<NerEpoch>,
    pub params: Checkpoint,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads an artifact, reporting which command produces it when absent.
pub fn read_artifact<T: DeserializeOwned>(dir: &Path, name: &str, producer: &str) -> Result<T> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path,
            producer: producer.to_string(),
        });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn require_file(dir: &Path, name: &str, producer: &str) -> Result<std::path::PathBuf> {
    let path = dir.join(name);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            path,
            producer: producer.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), "1").unwrap();
        let h = Header::new("x", "abc", dir.path(), &["a.json"]).unwrap();
        h.verify("abc", dir.path()).unwrap();
        assert!(matches!(h.verify("abd", dir.path()), Err(Error::HashMismatch(_))));
        fs::write(dir.path().join("a.json"), "2").unwrap();
        assert!(matches!(h.verify("abc", dir.path()), Err(Error::HashMismatch(_))));
    }

    #[test]
    fn missing_artifact_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_artifact::<NerArtifact>(dir.path(), NER, "train-ner").unwrap_err();
        assert!(err.to_string().contains("run `train-ner` first"), "{err}");
    }
}
