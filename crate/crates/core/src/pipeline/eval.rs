use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::EntityMention;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Scores {
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if gold > 0 { tp as f64 / gold as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            precision,
            recall,
            f1,
            true_positives: tp,
            predicted,
            gold,
        }
    }
}

/// Entity-level micro scores, a per-class breakdown, and what produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Scores,
    pub per_class: BTreeMap<String, Scores>,
    pub sentences: usize,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    pub version: String,
}

pub fn version_stamp() -> String {
    format!("deptrigger {}", env!("CARGO_PKG_VERSION"))
}

/// Exact-match (start, end, label) scoring, micro-averaged over sentences.
pub fn entity_f1(gold: &[Vec<EntityMention>], pred: &[Vec<EntityMention>]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Argument(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    // label -> (tp, predicted, gold)
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let gs: BTreeSet<&EntityMention> = g.iter().collect();
        let ps: BTreeSet<&EntityMention> = p.iter().collect();
        for m in &gs {
            counts.entry(m.label.clone()).or_default().2 += 1;
        }
        for m in &ps {
            let c = counts.entry(m.label.clone()).or_default();
            c.1 += 1;
            if gs.contains(m) {
                c.0 += 1;
            }
        }
    }
    let (tp, np, ng) = counts
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    Ok(EvalReport {
        overall: Scores::from_counts(tp, np, ng),
        per_class: counts
            .into_iter()
            .map(|(k, (t, p, g))| (k, Scores::from_counts(t, p, g)))
            .collect(),
        sentences: gold.len(),
        config_hash: None,
        config: None,
        version: version_stamp(),
    })
}

impl EvalReport {
    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}\n",
            "class", "precision", "recall", "f1", "tp", "pred", "gold"
        );
        let row = |name: &str, s: &Scores| {
            format!(
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6}\n",
                name, s.precision, s.recall, s.f1, s.true_positives, s.predicted, s.gold
            )
        };
        for (k, s) in &self.per_class {
            out.push_str(&row(k, s));
        }
        out.push_str(&row("overall", &self.overall));
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn m(s: usize, e: usize, l: &str) -> EntityMention {
        EntityMention::new(s, e, l)
    }

    #[test]
    fn examples() {
        let gold = vec![vec![m(0, 1, "PER"), m(3, 3, "LOC")]];
        let r = entity_f1(&gold, &gold).unwrap();
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (1.0, 1.0, 1.0));

        let r = entity_f1(&gold, &[vec![m(2, 2, "ORG")]]).unwrap();
        assert_eq!(r.overall.f1, 0.0);

        let r = entity_f1(&gold, &[vec![m(0, 1, "PER"), m(3, 4, "LOC")]]).unwrap();
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (0.5, 0.5, 0.5));
        assert_eq!(r.per_class["PER"].f1, 1.0);
        assert_eq!(r.per_class["LOC"].f1, 0.0);

        assert!(entity_f1(&gold, &[]).is_err());
        let empty = entity_f1(&[vec![]], &[vec![]]).unwrap();
        assert_eq!(empty.overall.f1, 0.0);
    }

    /// conlleval-style counting: walk both span lists, matching each
    /// predicted span against the gold spans of the same sentence.
    fn oracle(gold: &[Vec<(usize, usize, u8)>], pred: &[Vec<(usize, usize, u8)>]) -> (usize, usize, usize) {
        let mut tp = 0;
        let mut np = 0;
        let mut ng = 0;
        for (g, p) in gold.iter().zip(pred) {
            let mut g: Vec<_> = g.clone();
            g.sort();
            g.dedup();
            let mut p: Vec<_> = p.clone();
            p.sort();
            p.dedup();
            ng += g.len();
            np += p.len();
            tp += p.iter().filter(|x| g.contains(x)).count();
        }
        (tp, np, ng)
    }

    fn spans() -> impl Strategy<Value = Vec<(usize, usize, u8)>> {
        proptest::collection::vec((0usize..6, 0usize..3, 0u8..3), 0..4)
            .prop_map(|v| v.into_iter().map(|(s, l, c)| (s, s + l, c)).collect())
    }

    fn to_mentions(v: &[Vec<(usize, usize, u8)>]) -> Vec<Vec<EntityMention>> {
        v.iter()
            .map(|s| s.iter().map(|&(a, b, c)| m(a, b, ["PER", "LOC", "ORG"][c as usize])).collect())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_independent_counting(
            pairs in proptest::collection::vec((spans(), spans()), 1..6)
        ) {
            let (gold, pred): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let (tp, np, ng) = oracle(&gold, &pred);
            let r = entity_f1(&to_mentions(&gold), &to_mentions(&pred)).unwrap();
            prop_assert_eq!((r.overall.true_positives, r.overall.predicted, r.overall.gold), (tp, np, ng));
            let p = if np > 0 { tp as f64 / np as f64 } else { 0.0 };
            let rc = if ng > 0 { tp as f64 / ng as f64 } else { 0.0 };
            let f = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
            prop_assert!((r.overall.f1 - f).abs() < 1e-12);
        }
    }
}
