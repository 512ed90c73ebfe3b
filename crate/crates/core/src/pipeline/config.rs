use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ReadOptions, TagScheme};
use crate::depgraph::TriggerConfig;
use crate::error::{Error, Result};
use crate::matchnet::MatchConfig;
use crate::nernet::NerConfig;
use crate::numerics::TrainOptions;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Training corpus in column format.
    pub corpus: Option<PathBuf>,
    /// CoNLL-U parses aligned with `corpus`.
    pub parses: Option<PathBuf>,
    /// Held-out corpus scored by `evaluate`.
    pub test_corpus: Option<PathBuf>,
    /// Text word vectors; seeded random vectors when absent.
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub scheme: TagScheme,
    pub strict: bool,
    /// Share of training sentences (with entity and trigger labels) kept.
    pub fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scheme: TagScheme::Iob1,
            strict: false,
            fraction: 1.0,
        }
    }
}

impl CorpusConfig {
    pub fn read_options(&self) -> ReadOptions {
        ReadOptions {
            scheme: self.scheme,
            strict: self.strict,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub lowercase_fallback: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 100,
            lowercase_fallback: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fractions: vec![0.03, 0.05, 0.10, 0.15, 0.20],
            seeds: Vec::new(),
        }
    }
}

fn ner_train_default() -> TrainOptions {
    TrainOptions {
        epochs: 50,
        ..TrainOptions::default()
    }
}

/// Everything a pipeline run depends on. Loaded from TOML; every field has
/// a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub trigger: TriggerConfig,
    pub embeddings: EmbeddingConfig,
    pub matcher: MatchConfig,
    pub matcher_train: TrainOptions,
    pub ner: NerConfig,
    pub ner_train: TrainOptions,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: PathsConfig::default(),
            corpus: CorpusConfig::default(),
            trigger: TriggerConfig::default(),
            embeddings: EmbeddingConfig::default(),
            matcher: MatchConfig::default(),
            matcher_train: TrainOptions::default(),
            ner: NerConfig::default(),
            ner_train: ner_train_default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("fraction {f} not in (0, 1]")))
    }
}

fn check_exists(p: &Option<PathBuf>, what: &str) -> Result<()> {
    match p {
        Some(p) if !p.exists() => Err(Error::Config(format!("{what} `{}` does not exist", p.display()))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks value ranges and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        check_fraction(self.corpus.fraction)?;
        for &f in &self.sweep.fractions {
            check_fraction(f)?;
        }
        if self.embeddings.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        self.trigger.validate()?;
        self.matcher.validate()?;
        self.ner.validate()?;
        self.matcher_train.validate()?;
        self.ner_train.validate()?;
        if self.ner.hidden_size != self.matcher.hidden_size {
            return Err(Error::Config(format!(
                "ner.hidden_size ({}) must equal matcher.hidden_size ({})",
                self.ner.hidden_size, self.matcher.hidden_size
            )));
        }
        check_exists(&self.paths.corpus, "paths.corpus")?;
        check_exists(&self.paths.parses, "paths.parses")?;
        check_exists(&self.paths.test_corpus, "paths.test_corpus")?;
        check_exists(&self.paths.embeddings, "paths.embeddings")?;
        Ok(())
    }

    /// SHA-256 of the settings that determine trained artifacts. Output
    /// location, test corpus and sweep settings are excluded, so the same
    /// model can be evaluated on other data.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = None;
        c.paths.test_corpus = None;
        c.sweep = SweepConfig::default();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.paths
            .out_dir
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory (set paths.out_dir or --out)".into()))
    }

    pub fn require<'a>(&self, p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::Config(format!("{what} is required for this command")))
    }
}

impl PathsConfig {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.parses,
            &mut self.test_corpus,
            &mut self.embeddings,
            &mut self.out_dir,
        ] {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }
}
