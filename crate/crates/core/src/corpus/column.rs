use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;

use super::tags::{spans_from_tags, tags_from_spans, TagScheme};
use super::ParsedSentence;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadOptions {
    pub scheme: TagScheme,
    /// Fail on invalid tag transitions instead of repairing them.
    pub strict: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            scheme: TagScheme::Iob1,
            strict: false,
        }
    }
}

impl ReadOptions {
    pub fn new(scheme: TagScheme) -> Self {
        ReadOptions {
            scheme,
            strict: false,
        }
    }
}

/// Reads a token-per-line corpus: the first column is the token, the last
/// the entity tag, sentences are separated by blank lines and
/// `-DOCSTART-` lines are skipped. Every token line must have the same
/// number of columns (at least two).
pub fn read_column_corpus(path: &Path, opts: ReadOptions) -> Result<Vec<ParsedSentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_column_str(&text, path, opts)
}

/// Like [`read_column_corpus`] over in-memory text; `origin` is only used
/// in error messages.
pub fn read_column_str(text: &str, origin: &Path, opts: ReadOptions) -> Result<Vec<ParsedSentence>> {
    let mut sentences = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;
    let mut repaired = 0usize;

    let mut flush = |words: &mut Vec<String>,
                     tags: &mut Vec<String>,
                     lines: &mut Vec<usize>,
                     sentences: &mut Vec<ParsedSentence>|
     -> Result<()> {
        if words.is_empty() {
            return Ok(());
        }
        let (mentions, violations) = spans_from_tags(tags, opts.scheme, opts.strict).map_err(|v| {
            let line = lines.get(v.position).or(lines.last()).copied().unwrap_or(0);
            Error::parse(origin, line, v.message)
        })?;
        for v in &violations {
            let line = lines.get(v.position).or(lines.last()).copied().unwrap_or(0);
            warn!("{}:{line}: {} (repaired)", origin.display(), v.message);
        }
        repaired += violations.len();
        sentences.push(ParsedSentence::new(std::mem::take(words), mentions)?);
        tags.clear();
        lines.clear();
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut words, &mut tags, &mut lines, &mut sentences)?;
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols[0] == "-DOCSTART-" {
            flush(&mut words, &mut tags, &mut lines, &mut sentences)?;
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected token and tag columns, found {}", cols.len()),
            ));
        }
        match width {
            None => width = Some(cols.len()),
            Some(w) if w != cols.len() => {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("expected {w} columns, found {}", cols.len()),
                ));
            }
            Some(_) => {}
        }
        words.push(cols[0].to_string());
        tags.push(cols[cols.len() - 1].to_string());
        lines.push(line_no);
    }
    flush(&mut words, &mut tags, &mut lines, &mut sentences)?;
    if repaired > 0 {
        warn!("{}: repaired {repaired} invalid tag transitions", origin.display());
    }
    Ok(sentences)
}

/// Writes `token tag` lines in `scheme` with blank-line separators.
pub fn write_column_corpus<W: Write>(out: &mut W, sentences: &[ParsedSentence], scheme: TagScheme) -> std::io::Result<()> {
    for s in sentences {
        let tags = tags_from_spans(&s.mentions, s.len(), scheme);
        for (tok, tag) in s.tokens.iter().zip(&tags) {
            writeln!(out, "{} {}", tok.surface, tag)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::EntityMention;

    fn read(text: &str, scheme: TagScheme, strict: bool) -> Result<Vec<ParsedSentence>> {
        read_column_str(text, Path::new("test.txt"), ReadOptions { scheme, strict })
    }

    #[test]
    fn minimal_sentence() {
        let c = read("Alice B-PER\nruns O\n", TagScheme::Bio, true).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].mentions, vec![EntityMention::new(0, 0, "PER")]);
        assert_eq!(c[0].words(), vec!["Alice", "runs"]);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(read("", TagScheme::Bio, true).unwrap().is_empty());
        assert!(read("\n\n", TagScheme::Bio, true).unwrap().is_empty());
    }

    #[test]
    fn conll2003_four_columns_and_docstart() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-NP I-ORG\nrejects VBZ B-VP O\nGerman JJ B-NP I-MISC\ncall NN I-NP O\n\nPeter NNP B-NP I-PER\nBlackburn NNP I-NP I-PER\n";
        let c = read(text, TagScheme::Iob1, true).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(
            c[0].mentions,
            vec![EntityMention::new(0, 0, "ORG"), EntityMention::new(2, 2, "MISC")]
        );
        assert_eq!(c[1].mentions, vec![EntityMention::new(0, 1, "PER")]);
    }

    #[test]
    fn column_count_mismatch_reports_line() {
        let err = read("a NN O\nb O\n", TagScheme::Bio, false).unwrap_err();
        assert!(err.to_string().contains("test.txt:2"), "{err}");
        let err = read("a\n", TagScheme::Bio, false).unwrap_err();
        assert!(err.to_string().contains(":1"), "{err}");
    }

    #[test]
    fn strict_mode_rejects_dangling_inside() {
        let text = "x O\ny I-LOC\n";
        let err = read(text, TagScheme::Bio, true).unwrap_err();
        assert!(err.to_string().contains("test.txt:2"), "{err}");
        let c = read(text, TagScheme::Bio, false).unwrap();
        assert_eq!(c[0].mentions, vec![EntityMention::new(1, 1, "LOC")]);
    }

    #[test]
    fn tabs_and_spaces() {
        let c = read("New\tB-LOC\nYork  I-LOC\n", TagScheme::Bio, true).unwrap();
        assert_eq!(c[0].mentions, vec![EntityMention::new(0, 1, "LOC")]);
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(
            sents in proptest::collection::vec(
                proptest::collection::vec((0usize..4, "[a-z]{1,5}"), 1..8), 1..5),
            scheme_ix in 0usize..3,
        ) {
            let scheme = [TagScheme::Iob1, TagScheme::Bio, TagScheme::Bioes][scheme_ix];
            let labels = ["PER", "LOC", "ORG"];
            let corpus: Vec<ParsedSentence> = sents.into_iter().map(|toks| {
                // label id 3 means "not an entity"; consecutive equal ids merge
                let mut mentions: Vec<EntityMention> = Vec::new();
                let mut words = Vec::new();
                for (i, (l, w)) in toks.into_iter().enumerate() {
                    words.push(w);
                    if l < 3 {
                        mentions.push(EntityMention::new(i, i, labels[l]));
                    }
                }
                ParsedSentence::new(words, mentions).unwrap()
            }).collect();
            let mut buf = Vec::new();
            write_column_corpus(&mut buf, &corpus, scheme).unwrap();
            let back = read(std::str::from_utf8(&buf).unwrap(), scheme, true).unwrap();
            prop_assert_eq!(back, corpus);
        }
    }
}
