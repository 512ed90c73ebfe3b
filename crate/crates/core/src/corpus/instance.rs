use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tags::{decode_bioes_lenient, is_valid_bioes, tags_from_spans, TagScheme, OUTSIDE};
use super::{EntityMention, ParsedSentence};
use crate::depgraph::{TriggerMember, TriggerSet};
use crate::error::{Error, Result};

pub const TRIGGER_TAG: &str = "T-trigger";

/// One replicated sentence: exactly one entity is tagged (BIOES) and only
/// that entity's triggers carry [`TRIGGER_TAG`]. Sentences without entities
/// become all-`O` instances with no kept mention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub tokens: Vec<String>,
    pub entity_tags: Vec<String>,
    pub trigger_tags: Vec<String>,
    #[serde(default)]
    pub sentence_id: usize,
    #[serde(default)]
    pub kept_mention: Option<EntityMention>,
    #[serde(default)]
    pub trigger_hops: Vec<TriggerMember>,
}

impl TrainingInstance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token indices tagged as triggers, ascending.
    pub fn trigger_indices(&self) -> Vec<usize> {
        self.trigger_tags
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_str() == TRIGGER_TAG)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_triggers(&self) -> bool {
        self.trigger_tags.iter().any(|t| t == TRIGGER_TAG)
    }

    pub fn mentions(&self) -> Vec<EntityMention> {
        decode_bioes_lenient(&self.entity_tags)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::Argument("instance has no tokens".into()));
        }
        if self.entity_tags.len() != n || self.trigger_tags.len() != n {
            return Err(Error::Argument(format!(
                "instance of {n} tokens has {} entity tags and {} trigger tags",
                self.entity_tags.len(),
                self.trigger_tags.len()
            )));
        }
        if !is_valid_bioes(&self.entity_tags) {
            return Err(Error::Argument(format!("invalid BIOES sequence {:?}", self.entity_tags)));
        }
        if let Some(t) = self.trigger_tags.iter().find(|t| *t != OUTSIDE && *t != TRIGGER_TAG) {
            return Err(Error::Argument(format!("unknown trigger tag `{t}`")));
        }
        let mentions = self.mentions();
        if mentions.len() > 1 {
            return Err(Error::Argument(format!("instance tags {} entities", mentions.len())));
        }
        if mentions.first() != self.kept_mention.as_ref() {
            return Err(Error::Argument("entity tags disagree with kept_mention".into()));
        }
        for i in self.trigger_indices() {
            if self.entity_tags[i] != OUTSIDE {
                return Err(Error::Argument(format!("token {i} is both entity and trigger")));
            }
        }
        Ok(())
    }
}

/// One instance per mention of `s`, keeping that mention (others become
/// `O`) and tagging its triggers. Returns an empty list for a sentence
/// without mentions.
pub fn replicate_per_entity(s: &ParsedSentence, sentence_id: usize, triggers: &[TriggerSet]) -> Result<Vec<TrainingInstance>> {
    if triggers.len() != s.mentions.len() {
        return Err(Error::Argument(format!(
            "sentence {sentence_id} has {} mentions but {} trigger sets",
            s.mentions.len(),
            triggers.len()
        )));
    }
    let n = s.len();
    let tokens: Vec<String> = s.tokens.iter().map(|t| t.surface.clone()).collect();
    s.mentions
        .iter()
        .zip(triggers)
        .map(|(m, t)| {
            if &t.mention != m {
                return Err(Error::Argument(format!(
                    "trigger set for {:?} paired with mention {:?}",
                    t.mention, m
                )));
            }
            let entity_tags = tags_from_spans(std::slice::from_ref(m), n, TagScheme::Bioes);
            let mut trigger_tags = vec![OUTSIDE.to_string(); n];
            for member in &t.members {
                if member.index >= n || m.contains(member.index) {
                    return Err(Error::Argument(format!("invalid trigger index {}", member.index)));
                }
                trigger_tags[member.index] = TRIGGER_TAG.to_string();
            }
            Ok(TrainingInstance {
                tokens: tokens.clone(),
                entity_tags,
                trigger_tags,
                sentence_id,
                kept_mention: Some(m.clone()),
                trigger_hops: t.members.clone(),
            })
        })
        .collect()
}

/// All-`O` instance for a sentence kept only as a negative example.
pub fn negative_instance(s: &ParsedSentence, sentence_id: usize) -> TrainingInstance {
    let n = s.len();
    TrainingInstance {
        tokens: s.tokens.iter().map(|t| t.surface.clone()).collect(),
        entity_tags: vec![OUTSIDE.to_string(); n],
        trigger_tags: vec![OUTSIDE.to_string(); n],
        sentence_id,
        kept_mention: None,
        trigger_hops: Vec::new(),
    }
}

pub fn write_instances(path: &Path, instances: &[TrainingInstance]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_instances(path: &Path) -> Result<Vec<TrainingInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let inst: TrainingInstance = serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            inst.validate().map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            Ok(inst)
        })
        .collect()
}
