//! Deterministic toy corpus with planted trigger words.
//!
//! Every sentence comes from a small set of templates whose context words
//! (`visited`, `said`, `Shares of`, ...) fix the class and position of its
//! single entity (one template has none). Some names (`Jordan`, `Washington`) occur as both PER and LOC, so
//! the class can only be read off the context. Templates carry their own
//! dependency trees, so no parser is needed.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_column_corpus, write_conllu, DependencyEdge, EntityMention, ParsedSentence, TagScheme};
use crate::error::{Error, Result};

pub const TRAIN_SENTENCES: usize = 50;
pub const TEST_SENTENCES: usize = 50;
pub const TRAIN_SEED: u64 = 2021;
pub const TEST_SEED: u64 = 7;

const PER: &[&str] = &["Alice Chen", "Bob", "Maria Lopez", "Jordan", "Kenji Sato", "Washington", "Olga", "Tom Hardy"];
const LOC: &[&str] = &["Paris", "New York", "Jordan", "Lima", "Washington", "Cape Town", "Oslo"];
const ORG: &[&str] = &["Acme Corp", "Globex", "Initech Systems", "Umbrella", "Vandelay Industries", "Hooli"];

fn pool(class: &str) -> &'static [&'static str] {
    match class {
        "PER" => PER,
        "LOC" => LOC,
        _ => ORG,
    }
}

/// A template token: a literal word or an entity slot, with its 1-based
/// head inside the template (0 for the root) and relation.
struct Slot(&'static str, usize, &'static str);

const TEMPLATES: &[&[Slot]] = &[
    &[Slot("<PER>", 2, "nsubj"), Slot("said", 0, "root"), Slot("that", 5, "mark"), Slot("profits", 5, "nsubj"), Slot("rose", 2, "ccomp"), Slot(".", 2, "punct")],
    &[Slot("Tourists", 2, "nsubj"), Slot("visited", 0, "root"), Slot("<LOC>", 2, "obj"), Slot("last", 5, "amod"), Slot("week", 2, "obl:tmod"), Slot(".", 2, "punct")],
    &[Slot("Shares", 4, "nsubj"), Slot("of", 3, "case"), Slot("<ORG>", 1, "nmod"), Slot("rose", 0, "root"), Slot("sharply", 4, "advmod"), Slot(".", 4, "punct")],
    &[Slot("Reporters", 2, "nsubj"), Slot("interviewed", 0, "root"), Slot("<PER>", 2, "obj"), Slot("yesterday", 2, "obl:tmod"), Slot(".", 2, "punct")],
    &[Slot("The", 2, "det"), Slot("office", 4, "nsubj:pass"), Slot("is", 4, "aux:pass"), Slot("located", 0, "root"), Slot("in", 6, "case"), Slot("<LOC>", 4, "obl"), Slot(".", 4, "punct")],
    &[Slot("Analysts", 4, "nsubj"), Slot("at", 3, "case"), Slot("<ORG>", 1, "nmod"), Slot("expect", 0, "root"), Slot("growth", 4, "obj"), Slot(".", 4, "punct")],
    &[Slot("<PER>", 2, "nsubj"), Slot("joined", 0, "root"), Slot("the", 4, "det"), Slot("board", 2, "obj"), Slot("in", 6, "case"), Slot("2019", 2, "obl"), Slot(".", 2, "punct")],
    &[Slot("Officials", 2, "nsubj"), Slot("declined", 0, "root"), Slot("to", 4, "mark"), Slot("comment", 2, "xcomp"), Slot(".", 2, "punct")],
    &[Slot("Flights", 5, "nsubj:pass"), Slot("to", 3, "case"), Slot("<LOC>", 1, "nmod"), Slot("were", 5, "aux:pass"), Slot("cancelled", 0, "root"), Slot(".", 5, "punct")],
    &[Slot("<ORG>", 2, "compound"), Slot("shares", 3, "nsubj"), Slot("fell", 0, "root"), Slot("after", 6, "case"), Slot("the", 6, "det"), Slot("report", 3, "obl"), Slot(".", 3, "punct")],
];

/// Hands out names per class round-robin over a seeded permutation, so every
/// name occurs about equally often.
struct NameCycle {
    order: Vec<(&'static str, Vec<&'static str>)>,
    next: Vec<usize>,
}

impl NameCycle {
    fn new<R: Rng>(rng: &mut R) -> Self {
        let order: Vec<_> = ["PER", "LOC", "ORG"]
            .into_iter()
            .map(|c| {
                let mut names = pool(c).to_vec();
                names.shuffle(rng);
                (c, names)
            })
            .collect();
        NameCycle {
            next: vec![0; order.len()],
            order,
        }
    }

    fn take(&mut self, class: &str) -> &'static str {
        let k = self.order.iter().position(|(c, _)| *c == class).expect("known class");
        let names = &self.order[k].1;
        let name = names[self.next[k] % names.len()];
        self.next[k] += 1;
        name
    }
}

fn instantiate(template: &[Slot], names: &mut NameCycle) -> Result<ParsedSentence> {
    // expand slots, remembering where each template position ends up
    let mut words: Vec<String> = Vec::new();
    let mut mentions = Vec::new();
    let mut head_pos = Vec::with_capacity(template.len());
    let mut spans = Vec::with_capacity(template.len());
    for Slot(w, _, _) in template {
        let start = words.len();
        if let Some(class) = w.strip_prefix('<').and_then(|c| c.strip_suffix('>')) {
            let name = names.take(class);
            words.extend(name.split(' ').map(String::from));
            mentions.push(EntityMention::new(start, words.len() - 1, class));
        } else {
            words.push(w.to_string());
        }
        spans.push(start..words.len());
        head_pos.push(words.len() - 1);
    }
    let mut edges = Vec::new();
    for (i, Slot(_, head, rel)) in template.iter().enumerate() {
        let last = head_pos[i];
        for inner in spans[i].clone().filter(|&k| k != last) {
            edges.push(DependencyEdge {
                head: last,
                dependent: inner,
                relation: "compound".into(),
            });
        }
        if *head > 0 {
            edges.push(DependencyEdge {
                head: head_pos[head - 1],
                dependent: last,
                relation: rel.to_string(),
            });
        }
    }
    let mut s = ParsedSentence::new(words, mentions)?;
    s.set_edges(edges)?;
    Ok(s)
}

/// `n` sentences cycling through the templates; the seed fixes which name
/// lands in which sentence.
pub fn generate(n: usize, seed: u64) -> Result<Vec<ParsedSentence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = NameCycle::new(&mut rng);
    (0..n).map(|i| instantiate(TEMPLATES[i % TEMPLATES.len()], &mut names)).collect()
}

pub const TRAIN_FILE: &str = "train.txt";
pub const TRAIN_PARSES_FILE: &str = "train.conllu";
pub const TEST_FILE: &str = "test.txt";
pub const CONFIG_FILE: &str = "config.toml";

/// Settings sized for the toy corpus: small layers and a larger step size
/// than the full-scale defaults.
pub const CONFIG_TOML: &str = r#"seed = 42

[paths]
corpus = "train.txt"
parses = "train.conllu"
test_corpus = "test.txt"

[corpus]
scheme = "bio"

[embeddings]
dim = 16

[matcher]
hidden_size = 16
attention_dim = 16

[matcher_train]
epochs = 10
batch_size = 8
dropout = 0.1

[matcher_train.adam]
learning_rate = 0.01

[ner]
hidden_size = 16
attention_dim = 16

[ner_train]
epochs = 50
batch_size = 8
dropout = 0.1

[ner_train.adam]
learning_rate = 0.01

[sweep]
fractions = [1.0]
"#;

fn render(sentences: &[ParsedSentence], conllu: bool) -> String {
    let mut buf = Vec::new();
    if conllu {
        write_conllu(&mut buf, sentences).expect("write to memory");
    } else {
        write_column_corpus(&mut buf, sentences, TagScheme::Bio).expect("write to memory");
    }
    String::from_utf8(buf).expect("utf-8")
}

/// File name → content of the bundled synthetic data set.
pub fn bundle() -> Result<Vec<(&'static str, String)>> {
    let train = generate(TRAIN_SENTENCES, TRAIN_SEED)?;
    let test = generate(TEST_SENTENCES, TEST_SEED)?;
    Ok(vec![
        (TRAIN_FILE, render(&train, false)),
        (TRAIN_PARSES_FILE, render(&train, true)),
        (TEST_FILE, render(&test, false)),
        (CONFIG_FILE, CONFIG_TOML.to_string()),
    ])
}

pub fn write_bundle(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, content) in bundle()? {
        let p = dir.join(name);
        fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// The checked-in copy under `data/synthetic`.
pub fn bundled_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("synthetic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_column_str, read_conllu_str, ReadOptions};
    use crate::depgraph::{extract_triggers, sentence_graph, TriggerConfig};

    #[test]
    fn bundled_files_match_generator() {
        for (name, content) in bundle().unwrap() {
            let on_disk = fs::read_to_string(bundled_dir().join(name)).unwrap();
            assert_eq!(on_disk, content, "{name} is stale; regenerate with `deptrigger synth`");
        }
    }

    #[test]
    fn files_parse_back() {
        let bundle = bundle().unwrap();
        let opts = ReadOptions {
            scheme: TagScheme::Bio,
            strict: true,
        };
        let train = read_column_str(&bundle[0].1, Path::new(TRAIN_FILE), opts).unwrap();
        let parses = read_conllu_str(&bundle[1].1, Path::new(TRAIN_PARSES_FILE)).unwrap();
        assert_eq!(train.len(), TRAIN_SENTENCES);
        assert_eq!(parses.len(), TRAIN_SENTENCES);
        assert_eq!(train, generate(TRAIN_SENTENCES, TRAIN_SEED).unwrap().into_iter().map(|mut s| {
            s.edges.clear();
            s
        }).collect::<Vec<_>>());
    }

    #[test]
    fn every_name_occurs_in_training() {
        let train = generate(TRAIN_SENTENCES, TRAIN_SEED).unwrap();
        for class in ["PER", "LOC", "ORG"] {
            for name in pool(class) {
                let seen = train.iter().any(|s| {
                    s.mentions.iter().any(|m| {
                        m.label == class && s.tokens[m.start..=m.end].iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ") == *name
                    })
                });
                assert!(seen, "{class} {name}");
            }
        }
    }

    #[test]
    fn every_template_is_a_tree() {
        for s in generate(TEMPLATES.len() * 3, 1).unwrap() {
            assert_eq!(s.edges.len(), s.len() - 1, "{:?}", s.words());
        }
    }

    #[test]
    fn planted_words_are_triggers() {
        let cfg = TriggerConfig::default();
        let s = generate(2, 0).unwrap().remove(1);
        let g = sentence_graph(&s).unwrap();
        let t = extract_triggers(&g, &s.mentions[0], &cfg).unwrap();
        let words: Vec<&str> = t.indices().into_iter().map(|i| s.tokens[i].surface.as_str()).collect();
        assert!(words.contains(&"visited"), "{words:?}");
        assert!(!words.contains(&"."));
    }
}
