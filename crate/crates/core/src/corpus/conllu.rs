use std::fs;
use std::path::Path;

use super::{DependencyEdge, ParsedSentence};
use crate::error::{Error, Result};

/// One CoNLL-U sentence reduced to what trigger extraction needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyParse {
    pub forms: Vec<String>,
    /// 0-based, root attachments dropped.
    pub edges: Vec<DependencyEdge>,
}

pub fn read_conllu_parses(path: &Path) -> Result<Vec<DependencyParse>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_conllu_str(&text, path)
}

/// Parses CoNLL-U text. Only ID, FORM, HEAD and DEPREL are consumed;
/// multiword ranges (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn read_conllu_str(text: &str, origin: &Path) -> Result<Vec<DependencyParse>> {
    let mut out = Vec::new();
    let mut forms: Vec<String> = Vec::new();
    // (line, 1-based head, relation) per token
    let mut heads: Vec<(usize, usize, String)> = Vec::new();

    let finish = |forms: &mut Vec<String>,
                  heads: &mut Vec<(usize, usize, String)>,
                  out: &mut Vec<DependencyParse>|
     -> Result<()> {
        if forms.is_empty() {
            return Ok(());
        }
        let n = forms.len();
        let mut edges = Vec::with_capacity(n);
        for (dep, (line, head, rel)) in heads.drain(..).enumerate() {
            if head == 0 {
                continue;
            }
            if head > n {
                return Err(Error::parse(origin, line, format!("HEAD {head} beyond sentence length {n}")));
            }
            if head - 1 == dep {
                return Err(Error::parse(origin, line, "token is its own head"));
            }
            edges.push(DependencyEdge {
                head: head - 1,
                dependent: dep,
                relation: rel,
            });
        }
        out.push(DependencyParse {
            forms: std::mem::take(forms),
            edges,
        });
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            finish(&mut forms, &mut heads, &mut out)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(origin, line_no, format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(origin, line_no, format!("bad ID `{id}`")))?;
        if id != forms.len() + 1 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("ID {id} out of sequence (expected {})", forms.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::parse(origin, line_no, format!("bad HEAD `{}`", cols[6])))?;
        let rel = cols[7];
        if rel.is_empty() {
            return Err(Error::parse(origin, line_no, "empty DEPREL"));
        }
        forms.push(cols[1].to_string());
        heads.push((line_no, head, rel.to_string()));
    }
    finish(&mut forms, &mut heads, &mut out)?;
    Ok(out)
}

/// Writes sentences as CoNLL-U. Tokens without an incoming edge are
/// attached to the root; unused columns are `_`.
pub fn write_conllu<W: std::io::Write>(out: &mut W, sentences: &[ParsedSentence]) -> std::io::Result<()> {
    for s in sentences {
        let mut heads: Vec<Option<(usize, &str)>> = vec![None; s.len()];
        for e in &s.edges {
            heads[e.dependent] = Some((e.head + 1, e.relation.as_str()));
        }
        for (i, tok) in s.tokens.iter().enumerate() {
            let (head, rel) = heads[i].unwrap_or((0, "root"));
            writeln!(out, "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_", i + 1, tok.surface, head, rel)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Attaches parses to corpus sentences one-to-one. Tokenisation must be
/// identical: any token-count difference is an alignment error.
pub fn align_parses(corpus: &mut [ParsedSentence], parses: Vec<DependencyParse>) -> Result<()> {
    if corpus.len() != parses.len() {
        return Err(Error::Alignment {
            sentence: corpus.len().min(parses.len()),
            msg: format!("corpus has {} sentences but {} parses", corpus.len(), parses.len()),
        });
    }
    for (i, (s, p)) in corpus.iter_mut().zip(parses).enumerate() {
        if s.len() != p.forms.len() {
            return Err(Error::Alignment {
                sentence: i,
                msg: format!("sentence has {} tokens, parse has {}", s.len(), p.forms.len()),
            });
        }
        s.set_edges(p.edges).map_err(|e| Error::Alignment {
            sentence: i,
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityMention;

    pub(crate) const ALICE: &str = "# text = Alice was born in Beijing\n\
1\tAlice\tAlice\tPROPN\tNNP\t_\t3\tnsubj:pass\t_\t_\n\
2\twas\tbe\tAUX\tVBD\t_\t3\taux:pass\t_\t_\n\
3\tborn\tbear\tVERB\tVBN\t_\t0\troot\t_\t_\n\
4\tin\tin\tADP\tIN\t_\t5\tcase\t_\t_\n\
5\tBeijing\tBeijing\tPROPN\tNNP\t_\t3\tobl\t_\t_\n\n";

    fn parse(text: &str) -> Result<Vec<DependencyParse>> {
        read_conllu_str(text, Path::new("t.conllu"))
    }

    #[test]
    fn fig1_sentence_drops_root() {
        let p = parse(ALICE).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].edges.len(), 4);
        assert!(p[0].edges.contains(&DependencyEdge {
            head: 2,
            dependent: 0,
            relation: "nsubj:pass".into()
        }));
    }

    #[test]
    fn single_root_token_has_no_edges() {
        let p = parse("1\tHi\thi\tINTJ\tUH\t_\t0\troot\t_\t_\n").unwrap();
        assert_eq!(p[0].edges.len(), 0);
        assert_eq!(p[0].forms, vec!["Hi"]);
    }

    #[test]
    fn multiword_and_empty_nodes_skipped() {
        let text = "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tde\tde\tADP\t_\t_\t2\tcase\t_\t_\n\
2\tel\tel\tDET\t_\t_\t0\troot\t_\t_\n\
2.1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n";
        let p = parse(text).unwrap();
        assert_eq!(p[0].forms, vec!["de", "el"]);
        assert_eq!(p[0].edges.len(), 1);
    }

    #[test]
    fn misaligned_token_count_names_sentence() {
        let mut corpus = vec![
            ParsedSentence::new(vec!["a".into()], vec![]).unwrap(),
            ParsedSentence::new(
                "Alice was born in Beijing".split(' ').map(String::from).collect::<Vec<_>>()[..4].to_vec(),
                vec![EntityMention::new(0, 0, "PER")],
            )
            .unwrap(),
        ];
        let mut parses = parse("1\ta\ta\t_\t_\t_\t0\troot\t_\t_\n").unwrap();
        parses.extend(parse(ALICE).unwrap());
        let err = align_parses(&mut corpus, parses).unwrap_err();
        assert!(matches!(err, Error::Alignment { sentence: 1, .. }), "{err}");
    }

    #[test]
    fn write_then_read_round_trip() {
        let p = parse(ALICE).unwrap().remove(0);
        let mut s = ParsedSentence::new(p.forms.clone(), vec![]).unwrap();
        s.set_edges(p.edges.clone()).unwrap();
        let mut buf = Vec::new();
        write_conllu(&mut buf, &[s]).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vec![p]);
    }

    #[test]
    fn malformed_lines() {
        assert!(parse("1\tx\n").is_err());
        assert!(parse("1\tx\tx\t_\t_\t_\tz\troot\t_\t_\n").is_err());
        assert!(parse("2\tx\tx\t_\t_\t_\t0\troot\t_\t_\n").is_err());
        assert!(parse("1\tx\tx\t_\t_\t_\t1\tdep\t_\t_\n").is_err());
    }
}
