//! Dependency-trigger annotation and trigger-attended sequence labeling
//! for low-resource named entity recognition.
//!
//! The crate is organised as a two-stage pipeline:
//!
//! 1. [`corpus`] and [`depgraph`] turn an entity-annotated corpus plus
//!    CoNLL-U dependency parses into training instances, each carrying one
//!    entity and the tokens that sit within a few hops of it in the
//!    undirected dependency graph (its *triggers*).
//! 2. [`matchnet`] learns sentence and trigger-pattern vectors with a
//!    contrastive margin loss and stores every training pattern in a
//!    prototype table. [`nernet`] then trains a BiLSTM-CRF whose encoder
//!    output is re-weighted by attention queried with a trigger-pattern
//!    vector, keeping the matcher frozen.
//!
//! [`numerics`] holds the small reverse-mode autodiff core everything is
//! built on, and [`pipeline`] wires the stages into CLI commands.

pub mod corpus;
pub mod depgraph;
pub mod error;
pub mod matchnet;
pub mod nernet;
pub mod numerics;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
