//! Span tagging schemes (IOB1, BIO, BIOES) and span recovery.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EntityMention;
use crate::error::Error;

pub const OUTSIDE: &str = "O";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagScheme {
    /// CoNLL-2003 original: `I-` starts an entity unless it continues one of
    /// the same class; `B-` only separates adjacent same-class entities.
    Iob1,
    Bio,
    Bioes,
}

impl FromStr for TagScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" | "iob" => Ok(TagScheme::Iob1),
            "bio" | "iob2" => Ok(TagScheme::Bio),
            "bioes" | "iobes" => Ok(TagScheme::Bioes),
            other => Err(Error::Argument(format!("unknown tag scheme `{other}`"))),
        }
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagScheme::Iob1 => "iob1",
            TagScheme::Bio => "bio",
            TagScheme::Bioes => "bioes",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prefix {
    Begin,
    Inside,
    End,
    Single,
}

/// A parsed tag: `None` is `O`.
pub fn parse_tag(tag: &str) -> Result<Option<(Prefix, &str)>, String> {
    if tag == OUTSIDE {
        return Ok(None);
    }
    let (p, label) = tag
        .split_once('-')
        .ok_or_else(|| format!("malformed tag `{tag}`"))?;
    if label.is_empty() {
        return Err(format!("tag `{tag}` has an empty class"));
    }
    let prefix = match p {
        "B" => Prefix::Begin,
        "I" => Prefix::Inside,
        "E" | "L" => Prefix::End,
        "S" | "U" => Prefix::Single,
        _ => return Err(format!("unknown tag prefix in `{tag}`")),
    };
    Ok(Some((prefix, label)))
}

/// A tag sequence violation found while decoding, with its token position.
#[derive(Clone, Debug, PartialEq)]
pub struct TagViolation {
    pub position: usize,
    pub message: String,
}

/// Recovers spans from a tag sequence under `scheme`.
///
/// Invalid transitions (e.g. BIO `I-` with no open entity) are reported as
/// violations; when `strict` is false they are repaired (a dangling `I-` or
/// `E-` opens a new entity as if it were `B-`) and decoding continues.
/// Malformed tags are always an error.
pub fn spans_from_tags(
    tags: &[impl AsRef<str>],
    scheme: TagScheme,
    strict: bool,
) -> Result<(Vec<EntityMention>, Vec<TagViolation>), TagViolation> {
    let mut spans = Vec::new();
    let mut violations = Vec::new();
    let mut open: Option<(usize, String)> = None;

    let flag = |pos: usize, msg: String, violations: &mut Vec<TagViolation>| {
        let v = TagViolation {
            position: pos,
            message: msg,
        };
        if strict {
            Err(v)
        } else {
            violations.push(v);
            Ok(())
        }
    };
    let close = |open: &mut Option<(usize, String)>, end: usize, spans: &mut Vec<EntityMention>| {
        if let Some((start, label)) = open.take() {
            spans.push(EntityMention::new(start, end, label));
        }
    };

    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let parsed = parse_tag(tag).map_err(|message| TagViolation {
            position: i,
            message,
        })?;
        let unclosed = scheme == TagScheme::Bioes && open.is_some();
        match parsed {
            None => {
                if unclosed {
                    flag(i, format!("`{tag}` follows an unterminated entity"), &mut violations)?;
                }
                close(&mut open, i.wrapping_sub(1), &mut spans);
            }
            Some((Prefix::Begin, label)) => {
                if unclosed {
                    flag(i, format!("`{tag}` follows an unterminated entity"), &mut violations)?;
                }
                close(&mut open, i.wrapping_sub(1), &mut spans);
                open = Some((i, label.to_string()));
            }
            Some((Prefix::Inside, label)) => {
                let continues = open.as_ref().is_some_and(|(_, l)| l == label);
                if !continues {
                    if scheme != TagScheme::Iob1 {
                        flag(i, format!("`{tag}` does not continue an entity"), &mut violations)?;
                    }
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    open = Some((i, label.to_string()));
                }
            }
            Some((Prefix::End, label)) => {
                let continues = open.as_ref().is_some_and(|(_, l)| l == label);
                if !continues {
                    flag(i, format!("`{tag}` does not close an open entity"), &mut violations)?;
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    open = Some((i, label.to_string()));
                }
                close(&mut open, i, &mut spans);
            }
            Some((Prefix::Single, label)) => {
                if unclosed {
                    flag(i, format!("`{tag}` follows an unterminated entity"), &mut violations)?;
                }
                close(&mut open, i.wrapping_sub(1), &mut spans);
                spans.push(EntityMention::new(i, i, label));
            }
        }
    }
    if scheme == TagScheme::Bioes && open.is_some() {
        flag(tags.len(), "sentence ends inside an entity".into(), &mut violations)?;
    }
    close(&mut open, tags.len().wrapping_sub(1), &mut spans);
    Ok((spans, violations))
}

/// Greedy left-to-right recovery used on predicted sequences: a span opens
/// on `B-`/`S-` (or a stray `I-`/`E-`), closes on `E-`/`S-`, and a class
/// change or `O` closes whatever is open. Never fails; malformed tags are
/// read as `O`.
pub fn decode_bioes_lenient(tags: &[impl AsRef<str>]) -> Vec<EntityMention> {
    let cleaned: Vec<&str> = tags
        .iter()
        .map(|t| {
            let t = t.as_ref();
            if parse_tag(t).is_ok() {
                t
            } else {
                OUTSIDE
            }
        })
        .collect();
    spans_from_tags(&cleaned, TagScheme::Bioes, false)
        .expect("lenient decoding cannot fail on well-formed tags")
        .0
}

/// Encodes non-overlapping mentions as tags of `scheme` over `len` tokens.
pub fn tags_from_spans(mentions: &[EntityMention], len: usize, scheme: TagScheme) -> Vec<String> {
    let mut tags = vec![OUTSIDE.to_string(); len];
    let mut sorted: Vec<&EntityMention> = mentions.iter().collect();
    sorted.sort_by_key(|m| m.start);
    let mut prev: Option<&EntityMention> = None;
    for m in sorted {
        let label = &m.label;
        match scheme {
            TagScheme::Bioes => {
                if m.start == m.end {
                    tags[m.start] = format!("S-{label}");
                } else {
                    tags[m.start] = format!("B-{label}");
                    for t in &mut tags[m.start + 1..m.end] {
                        *t = format!("I-{label}");
                    }
                    tags[m.end] = format!("E-{label}");
                }
            }
            TagScheme::Bio => {
                tags[m.start] = format!("B-{label}");
                for t in &mut tags[m.start + 1..=m.end] {
                    *t = format!("I-{label}");
                }
            }
            TagScheme::Iob1 => {
                let adjacent_same = prev.is_some_and(|p| p.end + 1 == m.start && p.label == m.label);
                let first = if adjacent_same { "B" } else { "I" };
                tags[m.start] = format!("{first}-{label}");
                for t in &mut tags[m.start + 1..=m.end] {
                    *t = format!("I-{label}");
                }
            }
        }
        prev = Some(m);
    }
    tags
}

/// BIO → BIOES on a valid BIO sequence.
pub fn bio_to_bioes(tags: &[impl AsRef<str>]) -> Result<Vec<String>, TagViolation> {
    let len = tags.len();
    let (spans, _) = spans_from_tags(tags, TagScheme::Bio, true)?;
    Ok(tags_from_spans(&spans, len, TagScheme::Bioes))
}

/// BIOES → BIO on a valid BIOES sequence.
pub fn bioes_to_bio(tags: &[impl AsRef<str>]) -> Result<Vec<String>, TagViolation> {
    let len = tags.len();
    let (spans, _) = spans_from_tags(tags, TagScheme::Bioes, true)?;
    Ok(tags_from_spans(&spans, len, TagScheme::Bio))
}

/// True if `tags` is a valid BIOES sequence.
pub fn is_valid_bioes(tags: &[impl AsRef<str>]) -> bool {
    spans_from_tags(tags, TagScheme::Bioes, true).is_ok()
}

/// Whether the BIOES transition `from → to` is allowed. `None` stands for
/// the sentence boundary.
pub fn bioes_transition_allowed(from: Option<&str>, to: Option<&str>) -> bool {
    fn parse(t: Option<&str>) -> Option<(Prefix, &str)> {
        t.and_then(|t| parse_tag(t).ok().flatten())
    }
    let from_open = match parse(from) {
        Some((Prefix::Begin | Prefix::Inside, label)) => Some(label),
        _ => None,
    };
    match (from_open, parse(to)) {
        (Some(l), Some((Prefix::Inside | Prefix::End, m))) => l == m,
        (Some(_), _) => false,
        (None, Some((Prefix::Inside | Prefix::End, _))) => false,
        (None, _) => true,
    }
}
