//! Undirected dependency graphs and multi-hop trigger extraction.
//!
//! A trigger of an entity mention is any non-entity token within
//! `max_hops` edges of one of the mention's tokens once edge direction is
//! ignored. Hop 1 tokens are primary triggers, hop 2 secondary.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::{align_parses, DependencyEdge, DependencyParse, EntityMention, ParsedSentence};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedDepGraph {
    adjacency: Vec<BTreeSet<usize>>,
    punctuation: Vec<bool>,
}

impl UndirectedDepGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    /// Marks tokens whose surface is made only of punctuation/symbol
    /// characters so they can be excluded from trigger sets.
    pub fn with_punctuation<S: AsRef<str>>(mut self, words: &[S]) -> Result<Self> {
        if words.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} words for a {}-node graph",
                words.len(),
                self.len()
            )));
        }
        self.punctuation = words.iter().map(|w| is_punctuation(w.as_ref())).collect();
        Ok(self)
    }

    pub fn is_punctuation(&self, i: usize) -> bool {
        self.punctuation.get(i).copied().unwrap_or(false)
    }
}

pub fn is_punctuation(word: &str) -> bool {
    !word.is_empty() && word.chars().all(|c| !c.is_alphanumeric())
}

/// Symmetric adjacency over `n_tokens` nodes; duplicate and reversed
/// edges collapse.
pub fn build_graph(edges: &[DependencyEdge], n_tokens: usize) -> Result<UndirectedDepGraph> {
    let mut adjacency = vec![BTreeSet::new(); n_tokens];
    for e in edges {
        if e.head >= n_tokens || e.dependent >= n_tokens {
            return Err(Error::Argument(format!(
                "edge {}→{} out of range for {n_tokens} tokens",
                e.head, e.dependent
            )));
        }
        if e.head == e.dependent {
            return Err(Error::Argument(format!("self-loop on token {}", e.head)));
        }
        adjacency[e.head].insert(e.dependent);
        adjacency[e.dependent].insert(e.head);
    }
    Ok(UndirectedDepGraph {
        adjacency,
        punctuation: vec![false; n_tokens],
    })
}

/// Graph of a sentence with its punctuation mask filled in.
pub fn sentence_graph(s: &ParsedSentence) -> Result<UndirectedDepGraph> {
    build_graph(&s.edges, s.len())?.with_punctuation(&s.words())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub max_hops: usize,
    pub exclude_punctuation: bool,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            max_hops: 2,
            exclude_punctuation: true,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_hops == 0 {
            return Err(Error::Config("trigger.max_hops must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriggerMember {
    pub index: usize,
    pub hop: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerSet {
    pub mention: EntityMention,
    /// Sorted by token index.
    pub members: Vec<TriggerMember>,
}

impl TriggerSet {
    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Multi-source BFS seeded with every token of the mention at distance 0.
pub fn extract_triggers(g: &UndirectedDepGraph, m: &EntityMention, cfg: &TriggerConfig) -> Result<TriggerSet> {
    if m.start > m.end || m.end >= g.len() {
        return Err(Error::Argument(format!(
            "mention {}..={} out of range for {} nodes",
            m.start,
            m.end,
            g.len()
        )));
    }
    let mut dist = vec![usize::MAX; g.len()];
    let mut queue = VecDeque::new();
    for i in m.indices() {
        dist[i] = 0;
        queue.push_back(i);
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] == cfg.max_hops {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let members = dist
        .iter()
        .enumerate()
        .filter(|&(i, &d)| d >= 1 && d <= cfg.max_hops && !(cfg.exclude_punctuation && g.is_punctuation(i)))
        .map(|(index, &hop)| TriggerMember { index, hop })
        .collect();
    Ok(TriggerSet {
        mention: m.clone(),
        members,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTriggers {
    pub sentence_id: usize,
    /// One set per mention, in mention order.
    pub triggers: Vec<TriggerSet>,
}

impl SentenceTriggers {
    /// True when the sentence has mentions and none of them got a trigger.
    pub fn all_empty(&self) -> bool {
        !self.triggers.is_empty() && self.triggers.iter().all(TriggerSet::is_empty)
    }
}

/// Trigger sets for every mention of every sentence. Sentences must already
/// carry their dependency edges.
pub fn annotate_corpus(corpus: &[ParsedSentence], cfg: &TriggerConfig) -> Result<Vec<SentenceTriggers>> {
    cfg.validate()?;
    corpus
        .iter()
        .enumerate()
        .map(|(sentence_id, s)| {
            let g = sentence_graph(s).map_err(|e| Error::Alignment {
                sentence: sentence_id,
                msg: e.to_string(),
            })?;
            let triggers = s
                .mentions
                .iter()
                .map(|m| extract_triggers(&g, m, cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok(SentenceTriggers { sentence_id, triggers })
        })
        .collect()
}

/// Aligns `parses` onto `corpus` and annotates it.
pub fn annotate_with_parses(
    corpus: &mut [ParsedSentence],
    parses: Vec<DependencyParse>,
    cfg: &TriggerConfig,
) -> Result<Vec<SentenceTriggers>> {
    align_parses(corpus, parses)?;
    annotate_corpus(corpus, cfg)
}

/// Percentage of entities having each trigger count.
pub fn trigger_count_distribution(annotations: &[SentenceTriggers]) -> Result<BTreeMap<usize, f64>> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut total = 0usize;
    for s in annotations {
        for t in &s.triggers {
            *counts.entry(t.len()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("no annotated entities".into()));
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, 100.0 * c as f64 / total as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub sentences: usize,
    pub entities: usize,
    pub empty_trigger_entities: usize,
    /// Sentences with mentions where every mention's trigger set is empty.
    pub flagged_sentences: Vec<usize>,
    pub trigger_count_histogram: BTreeMap<usize, f64>,
    pub mean_triggers_per_entity: f64,
}

pub fn summarize(annotations: &[SentenceTriggers]) -> AnnotationSummary {
    let entities: usize = annotations.iter().map(|s| s.triggers.len()).sum();
    let empty = annotations
        .iter()
        .flat_map(|s| &s.triggers)
        .filter(|t| t.is_empty())
        .count();
    let total_triggers: usize = annotations.iter().flat_map(|s| &s.triggers).map(TriggerSet::len).sum();
    AnnotationSummary {
        sentences: annotations.len(),
        entities,
        empty_trigger_entities: empty,
        flagged_sentences: annotations
            .iter()
            .filter(|s| s.all_empty())
            .map(|s| s.sentence_id)
            .collect(),
        trigger_count_histogram: trigger_count_distribution(annotations).unwrap_or_default(),
        mean_triggers_per_entity: if entities > 0 {
            total_triggers as f64 / entities as f64
        } else {
            0.0
        },
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn edge(h: usize, d: usize) -> DependencyEdge {
        DependencyEdge {
            head: h,
            dependent: d,
            relation: "dep".into(),
        }
    }

    fn alice_graph() -> UndirectedDepGraph {
        build_graph(&[edge(2, 0), edge(2, 1), edge(2, 4), edge(4, 3)], 5).unwrap()
    }

    #[test]
    fn fig1_adjacency() {
        let g = alice_graph();
        assert_eq!(g.neighbors(2).iter().copied().collect::<Vec<_>>(), vec![0, 1, 4]);
        assert_eq!(g.neighbors(4).iter().copied().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn empty_and_duplicate_edges() {
        let g = build_graph(&[], 3).unwrap();
        assert!((0..3).all(|i| g.neighbors(i).is_empty()));
        let g = build_graph(&[edge(0, 1), edge(0, 1), edge(1, 0)], 2).unwrap();
        assert_eq!(g.neighbors(0).len(), 1);
        assert_eq!(g.neighbors(1).len(), 1);
    }

    #[test]
    fn out_of_range_edge() {
        assert!(build_graph(&[edge(0, 5)], 3).is_err());
    }

    #[test]
    fn born_is_the_one_hop_trigger_of_alice() {
        let cfg = TriggerConfig {
            max_hops: 1,
            exclude_punctuation: true,
        };
        let t = extract_triggers(&alice_graph(), &EntityMention::new(0, 0, "PER"), &cfg).unwrap();
        assert_eq!(t.members, vec![TriggerMember { index: 2, hop: 1 }]);

        let t2 = extract_triggers(&alice_graph(), &EntityMention::new(0, 0, "PER"), &TriggerConfig::default()).unwrap();
        assert_eq!(
            t2.members,
            vec![
                TriggerMember { index: 1, hop: 2 },
                TriggerMember { index: 2, hop: 1 },
                TriggerMember { index: 4, hop: 2 }
            ]
        );
    }

    #[test]
    fn isolated_entity_has_no_triggers() {
        let g = build_graph(&[edge(1, 2)], 3).unwrap();
        let t = extract_triggers(&g, &EntityMention::new(0, 0, "X"), &TriggerConfig::default()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn punctuation_is_excluded_by_default() {
        let g = build_graph(&[edge(1, 0), edge(1, 2)], 3)
            .unwrap()
            .with_punctuation(&["Bob", "left", "."])
            .unwrap();
        let m = EntityMention::new(0, 0, "PER");
        let t = extract_triggers(&g, &m, &TriggerConfig::default()).unwrap();
        assert_eq!(t.indices(), vec![1]);
        let keep = TriggerConfig {
            exclude_punctuation: false,
            ..Default::default()
        };
        assert_eq!(extract_triggers(&g, &m, &keep).unwrap().indices(), vec![1, 2]);
    }

    #[test]
    fn distribution_examples() {
        let set = |n: usize| TriggerSet {
            mention: EntityMention::new(0, 0, "X"),
            members: (1..=n).map(|i| TriggerMember { index: i, hop: 1 }).collect(),
        };
        let ann = vec![SentenceTriggers {
            sentence_id: 0,
            triggers: vec![set(2), set(2)],
        }];
        assert_eq!(trigger_count_distribution(&ann).unwrap(), BTreeMap::from([(2, 100.0)]));

        let ann = vec![
            SentenceTriggers {
                sentence_id: 0,
                triggers: vec![set(1), set(3)],
            },
            SentenceTriggers {
                sentence_id: 1,
                triggers: vec![set(1)],
            },
        ];
        let d = trigger_count_distribution(&ann).unwrap();
        assert!((d[&1] - 66.6667).abs() < 1e-3);
        assert!((d[&3] - 33.3333).abs() < 1e-3);
        assert!((d.values().sum::<f64>() - 100.0).abs() < 0.01);

        assert!(trigger_count_distribution(&[]).is_err());
    }

    #[test]
    fn annotate_flags_sentences_without_triggers() {
        let mut a = ParsedSentence::new(vec!["Alice".into(), "ran".into()], vec![EntityMention::new(0, 0, "PER")]).unwrap();
        a.set_edges(vec![edge(1, 0)]).unwrap();
        let b = ParsedSentence::new(vec!["Paris".into(), "!".into()], vec![EntityMention::new(0, 0, "LOC")]).unwrap();
        let c = ParsedSentence::new(vec!["nothing".into()], vec![]).unwrap();
        let ann = annotate_corpus(&[a, b, c], &TriggerConfig::default()).unwrap();
        let summary = summarize(&ann);
        assert_eq!(summary.entities, 2);
        assert_eq!(summary.empty_trigger_entities, 1);
        assert_eq!(summary.flagged_sentences, vec![1]);
    }

    /// Floyd–Warshall distances, independent of the BFS path.
    fn apsp(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(a, b) in edges {
            d[a][b] = 1;
            d[b][a] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    prop_compose! {
        fn graph_and_mention()(n in 1usize..=12)
            (edges in proptest::collection::vec((0..n, 0..n), 0..20),
             start in 0..n, len in 1usize..3, n in Just(n))
            -> (usize, Vec<(usize, usize)>, EntityMention) {
            let edges = edges.into_iter().filter(|(a, b)| a != b).collect();
            let end = (start + len - 1).min(n - 1);
            (n, edges, EntityMention::new(start, end, "X"))
        }
    }

    proptest! {
        #[test]
        fn bfs_matches_shortest_paths((n, edges, m) in graph_and_mention(), k in 1usize..=3) {
            let deps: Vec<_> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
            let g = build_graph(&deps, n).unwrap();
            let cfg = TriggerConfig { max_hops: k, exclude_punctuation: false };
            let got = extract_triggers(&g, &m, &cfg).unwrap();
            let d = apsp(n, &edges);
            let expected: Vec<TriggerMember> = (0..n)
                .filter(|i| !m.contains(*i))
                .filter_map(|i| {
                    let hop = m.indices().map(|s| d[s][i]).min().unwrap();
                    (hop >= 1 && hop <= k).then_some(TriggerMember { index: i, hop })
                })
                .collect();
            prop_assert_eq!(got.members, expected);
        }

        #[test]
        fn reversing_edges_changes_nothing((n, edges, m) in graph_and_mention()) {
            let fwd: Vec<_> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
            let rev: Vec<_> = edges.iter().map(|&(a, b)| edge(b, a)).collect();
            let cfg = TriggerConfig::default();
            let a = extract_triggers(&build_graph(&fwd, n).unwrap(), &m, &cfg).unwrap();
            let b = extract_triggers(&build_graph(&rev, n).unwrap(), &m, &cfg).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn monotone_in_max_hops((n, edges, m) in graph_and_mention(), k in 1usize..4) {
            let deps: Vec<_> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
            let g = build_graph(&deps, n).unwrap();
            let small = extract_triggers(&g, &m, &TriggerConfig { max_hops: k, exclude_punctuation: false }).unwrap();
            let big = extract_triggers(&g, &m, &TriggerConfig { max_hops: k + 1, exclude_punctuation: false }).unwrap();
            for member in &small.members {
                prop_assert!(big.members.contains(member));
                prop_assert!(!m.contains(member.index));
            }
        }

        #[test]
        fn relabeling_permutes_triggers(
            (n, edges, m) in graph_and_mention(),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            // single-token mention so the image is still a contiguous span
            let m = EntityMention::new(m.start, m.start, "X");
            let deps: Vec<_> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
            let mapped: Vec<_> = edges.iter().map(|&(a, b)| edge(perm[a], perm[b])).collect();
            let cfg = TriggerConfig { max_hops: 2, exclude_punctuation: false };
            let a = extract_triggers(&build_graph(&deps, n).unwrap(), &m, &cfg).unwrap();
            let pm = EntityMention::new(perm[m.start], perm[m.start], "X");
            let b = extract_triggers(&build_graph(&mapped, n).unwrap(), &pm, &cfg).unwrap();
            let mut expected: Vec<TriggerMember> = a.members.iter()
                .map(|t| TriggerMember { index: perm[t.index], hop: t.hop })
                .collect();
            expected.sort();
            prop_assert_eq!(b.members, expected);
        }
    }
}
