//! Command orchestration: configuration, artifacts with provenance hashes,
//! the pipeline stages, scoring and fraction sweeps.

mod artifacts;
mod commands;
mod config;
mod eval;

pub use artifacts::{
    file_sha256, read_artifact, AnnotationArtifact, EmbeddingArtifact, Header, MatcherArtifact, NerArtifact,
    PrototypeArtifact, ANNOTATION, EMBEDDINGS, INSTANCES, MATCHER, NER, NER_PROTOTYPE, PREDICTIONS, PROTOTYPE, REPORT,
};
pub use commands::{score_files, stats, sweep, sweep_dir, Pipeline, StatsReport, SweepReport, SweepRow};
pub use config::{CorpusConfig, EmbeddingConfig, PathsConfig, RunConfig, SweepConfig};
pub use eval::{entity_f1, version_stamp, EvalReport, Scores};
