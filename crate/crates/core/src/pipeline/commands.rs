use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifacts::*;
use super::config::RunConfig;
use super::eval::{entity_f1, EvalReport};
use crate::corpus::tags::tags_from_spans;
use crate::corpus::{
    compute_stats, load_embeddings, negative_instance, read_column_corpus, read_conllu_parses, read_instances,
    replicate_per_entity, sample_indices, write_instances, DatasetStats, EmbeddingTable, ParsedSentence, ReadOptions,
    TagScheme, TrainingInstance,
};
use crate::depgraph::{annotate_with_parses, summarize, AnnotationSummary, TriggerConfig};
use crate::error::{Error, Result};
use crate::matchnet::{build_prototype, train_matcher, MatchExample, PrototypeTable, TriggerMatcher};
use crate::nernet::{train_ner, EncoderMode, NerExample, NerModel, TagVocabulary};
use crate::numerics::{Checkpoint, TrainOptions};

/// Runs pipeline stages against one output directory.
pub struct Pipeline {
    pub config: RunConfig,
    /// Let `evaluate` proceed when artifact hashes disagree.
    pub allow_hash_mismatch: bool,
}

fn read_corpus(path: &Path, opts: ReadOptions) -> Result<Vec<ParsedSentence>> {
    let corpus = read_column_corpus(path, opts)?;
    if corpus.is_empty() {
        return Err(Error::Empty(format!("{} contains no sentences", path.display())));
    }
    info!("read {} sentences from {}", corpus.len(), path.display());
    Ok(corpus)
}

fn match_examples(instances: &[TrainingInstance], table: &EmbeddingTable) -> Vec<MatchExample> {
    instances
        .iter()
        .filter(|i| i.has_triggers())
        .map(|i| MatchExample {
            embedded: table.embed(&i.tokens),
            triggers: i.trigger_indices(),
            sentence_id: i.sentence_id,
            label: i.kept_mention.as_ref().map(|m| m.label.clone()).unwrap_or_default(),
        })
        .collect()
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            allow_hash_mismatch: false,
        })
    }

    fn dir(&self) -> Result<&Path> {
        let d = self.config.out_dir()?;
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        Ok(d)
    }

    fn hash(&self) -> String {
        self.config.hash()
    }

    fn check(&self, header: &Header) -> Result<()> {
        match header.verify(&self.hash(), self.config.out_dir()?) {
            Err(e @ Error::HashMismatch(_)) if self.allow_hash_mismatch => {
                warn!("{e} (continuing: hash check overridden)");
                Ok(())
            }
            other => other,
        }
    }

    fn train_opts(&self, base: &TrainOptions, salt: u64) -> TrainOptions {
        TrainOptions {
            seed: self.config.seed.wrapping_add(salt),
            ..base.clone()
        }
    }

    fn load_instances(&self) -> Result<(AnnotationArtifact, Vec<TrainingInstance>)> {
        let dir = self.config.out_dir()?;
        let ann: AnnotationArtifact = read_artifact(dir, ANNOTATION, "annotate")?;
        self.check(&ann.header)?;
        let instances = read_instances(&require_file(dir, INSTANCES, "annotate")?)?;
        Ok((ann, instances))
    }

    fn load_embeddings(&self) -> Result<EmbeddingArtifact> {
        let mut art: EmbeddingArtifact = read_artifact(self.config.out_dir()?, EMBEDDINGS, "train-matcher")?;
        self.check(&art.header)?;
        art.table.rebuild_index();
        Ok(art)
    }

    fn load_matcher(&self) -> Result<(MatcherArtifact, TriggerMatcher)> {
        let art: MatcherArtifact = read_artifact(self.config.out_dir()?, MATCHER, "train-matcher")?;
        self.check(&art.header)?;
        let matcher = TriggerMatcher::from_store(art.params.clone().into_store()?, art.config.clone())?;
        if matcher.store.content_hash() != art.params_hash {
            return Err(Error::HashMismatch("matcher parameters do not match their recorded hash".into()));
        }
        Ok((art, matcher))
    }

    /// Replicates the sampled training sentences, one copy per entity, and
    /// tags each copy's triggers.
    pub fn annotate(&self) -> Result<serde_json::Value> {
        let cfg = &self.config;
        let corpus_path = cfg.require(&cfg.paths.corpus, "paths.corpus (--corpus)")?;
        let parses_path = cfg.require(&cfg.paths.parses, "paths.parses (--parses)")?;
        let dir = self.dir()?;
        let mut corpus = read_corpus(corpus_path, cfg.corpus.read_options())?;
        let parses = read_conllu_parses(parses_path)?;
        let annotations = annotate_with_parses(&mut corpus, parses, &cfg.trigger)?;
        let classes: BTreeSet<String> = corpus.iter().flat_map(|s| s.mentions.iter().map(|m| m.label.clone())).collect();

        let sampled = sample_indices(corpus.len(), cfg.corpus.fraction, cfg.seed)?;
        let mut instances = Vec::new();
        let mut sampled_annotations = Vec::with_capacity(sampled.len());
        for &i in &sampled {
            let s = &corpus[i];
            if s.mentions.is_empty() {
                instances.push(negative_instance(s, i));
            } else {
                instances.extend(replicate_per_entity(s, i, &annotations[i].triggers)?);
            }
            sampled_annotations.push(annotations[i].clone());
        }
        let summary: AnnotationSummary = summarize(&sampled_annotations);
        if summary.empty_trigger_entities > 0 {
            warn!(
                "{} of {} sampled entities have no triggers; they are kept for NER training only",
                summary.empty_trigger_entities, summary.entities
            );
        }
        write_instances(&dir.join(INSTANCES), &instances)?;
        let matcher_instances = instances.iter().filter(|i| i.has_triggers()).count();
        let art = AnnotationArtifact {
            header: Header::new("annotation", &self.hash(), dir, &[INSTANCES])?,
            classes: classes.into_iter().collect(),
            corpus_sentences: corpus.len(),
            sampled_sentences: sampled,
            instances: instances.len(),
            matcher_instances,
            summary,
        };
        write_json(&dir.join(ANNOTATION), &art)?;
        Ok(json!({
            "command": "annotate",
            "config_hash": art.header.config_hash,
            "corpus_sentences": art.corpus_sentences,
            "sampled_sentences": art.sampled_sentences.len(),
            "instances": art.instances,
            "matcher_instances": matcher_instances,
            "classes": art.classes,
            "entities": art.summary.entities,
            "empty_trigger_entities": art.summary.empty_trigger_entities,
            "mean_triggers_per_entity": art.summary.mean_triggers_per_entity,
            "artifacts": [INSTANCES, ANNOTATION],
        }))
    }

    fn build_embeddings(&self) -> Result<(String, EmbeddingTable)> {
        let cfg = &self.config;
        let corpus_path = cfg.require(&cfg.paths.corpus, "paths.corpus (--corpus)")?;
        let train = read_corpus(corpus_path, cfg.corpus.read_options())?;
        let train_words: BTreeSet<String> = train.iter().flat_map(|s| s.tokens.iter().map(|t| t.surface.clone())).collect();
        match &cfg.paths.embeddings {
            Some(path) => {
                let full = load_embeddings(path, cfg.embeddings.dim, cfg.embeddings.lowercase_fallback)?;
                let mut words = train_words;
                if let Some(test) = &cfg.paths.test_corpus {
                    for s in read_corpus(test, cfg.corpus.read_options())? {
                        words.extend(s.tokens.into_iter().map(|t| t.surface));
                    }
                }
                let table = full.restrict(words.iter().map(String::as_str));
                info!("kept {} of {} pretrained vectors", table.vocab_size(), full.vocab_size());
                Ok((path.display().to_string(), table))
            }
            None => {
                warn!("no pretrained embeddings given; using seeded random vectors");
                let table = EmbeddingTable::random(
                    train_words.iter().map(String::as_str),
                    cfg.embeddings.dim,
                    cfg.seed,
                    cfg.embeddings.lowercase_fallback,
                )?;
                Ok(("random".to_string(), table))
            }
        }
    }

    pub fn train_matcher(&self) -> Result<serde_json::Value> {
        let (_, instances) = self.load_instances()?;
        let dir = self.dir()?;
        let (source, table) = self.build_embeddings()?;
        let emb = EmbeddingArtifact {
            header: Header::new("embeddings", &self.hash(), dir, &[])?,
            source,
            table,
        };
        write_json(&dir.join(EMBEDDINGS), &emb)?;

        let examples = match_examples(&instances, &emb.table);
        let opts = self.train_opts(&self.config.matcher_train, 0);
        let (matcher, epochs) = train_matcher(&examples, emb.table.dim(), &self.config.matcher, &opts)?;
        let art = MatcherArtifact {
            header: Header::new("matcher", &self.hash(), dir, &[ANNOTATION, INSTANCES, EMBEDDINGS])?,
            config: matcher.config.clone(),
            params_hash: matcher.store.content_hash(),
            epochs,
            params: Checkpoint::from_store(&matcher.store),
        };
        write_json(&dir.join(MATCHER), &art)?;
        Ok(json!({
            "command": "train-matcher",
            "config_hash": art.header.config_hash,
            "examples": examples.len(),
            "epochs": art.epochs,
            "params_hash": art.params_hash,
            "artifacts": [EMBEDDINGS, MATCHER],
        }))
    }

    pub fn build_prototype(&self) -> Result<serde_json::Value> {
        let (m_art, matcher) = self.load_matcher()?;
        let (_, instances) = self.load_instances()?;
        let emb = self.load_embeddings()?;
        let dir = self.dir()?;
        let examples = match_examples(&instances, &emb.table);
        let table = build_prototype(matcher.view(), &examples)?;
        let art = PrototypeArtifact {
            header: Header::new("prototype", &self.hash(), dir, &[MATCHER, INSTANCES, EMBEDDINGS])?,
            params_hash: m_art.params_hash,
            table,
        };
        write_json(&dir.join(PROTOTYPE), &art)?;
        Ok(json!({
            "command": "build-prototype",
            "config_hash": art.header.config_hash,
            "entries": art.table.len(),
            "dim": art.table.dim,
            "artifacts": [PROTOTYPE],
        }))
    }

    pub fn train_ner(&self) -> Result<serde_json::Value> {
        let (m_art, matcher) = self.load_matcher()?;
        let p_art: PrototypeArtifact = read_artifact(self.config.out_dir()?, PROTOTYPE, "build-prototype")?;
        self.check(&p_art.header)?;
        let (ann, instances) = self.load_instances()?;
        let emb = self.load_embeddings()?;
        let dir = self.dir()?;
        let matcher_file = file_sha256(&dir.join(MATCHER))?;

        let tags = TagVocabulary::from_classes(&ann.classes)?;
        let examples = instances
            .iter()
            .map(|i| {
                Ok(NerExample {
                    embedded: emb.table.embed(&i.tokens),
                    tags: tags.encode(&i.entity_tags)?,
                    triggers: i.trigger_indices(),
                    sentence_id: i.sentence_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let opts = self.train_opts(&self.config.ner_train, 1);
        let (model, epochs) = train_ner(&examples, &matcher, tags, &self.config.ner, &opts)?;
        if file_sha256(&dir.join(MATCHER))? != matcher_file || matcher.store.content_hash() != m_art.params_hash {
            return Err(Error::FrozenMutation("matcher checkpoint changed during train-ner".into()));
        }

        let mut artifacts = vec![NER];
        if self.config.ner.mode == EncoderMode::Merge {
            let table = model.build_prototype(&matcher, &match_examples(&instances, &emb.table))?;
            let art = PrototypeArtifact {
                header: Header::new("ner-prototype", &self.hash(), dir, &[MATCHER, INSTANCES, EMBEDDINGS])?,
                params_hash: model.store.content_hash(),
                table,
            };
            write_json(&dir.join(NER_PROTOTYPE), &art)?;
            artifacts.push(NER_PROTOTYPE);
        }
        let mut upstream = vec![MATCHER, PROTOTYPE, ANNOTATION, INSTANCES, EMBEDDINGS];
        if self.config.ner.mode == EncoderMode::Merge {
            upstream.push(NER_PROTOTYPE);
        }
        let art = NerArtifact {
            header: Header::new("ner", &self.hash(), dir, &upstream)?,
            config: model.net.config.clone(),
            tags: model.net.tags.clone(),
            matcher_hash: model.matcher_hash.clone(),
            epochs,
            params: Checkpoint::from_store(&model.store),
        };
        write_json(&dir.join(NER), &art)?;
        Ok(json!({
            "command": "train-ner",
            "config_hash": art.header.config_hash,
            "mode": self.config.ner.mode.to_string(),
            "examples": examples.len(),
            "epochs": art.epochs,
            "matcher_hash": art.matcher_hash,
            "params_hash": model.store.content_hash(),
            "artifacts": artifacts,
        }))
    }

    /// Loads the trained networks and the prototype used at inference.
    pub fn load_models(&self) -> Result<(EmbeddingTable, TriggerMatcher, NerModel, PrototypeTable)> {
        let dir = self.config.out_dir()?;
        let n_art: NerArtifact = read_artifact(dir, NER, "train-ner")?;
        self.check(&n_art.header)?;
        let (m_art, matcher) = self.load_matcher()?;
        if n_art.matcher_hash != m_art.params_hash {
            return Err(Error::HashMismatch("NER model was trained against a different matcher".into()));
        }
        let proto_name = match n_art.config.mode {
            EncoderMode::Separate => PROTOTYPE,
            EncoderMode::Merge => NER_PROTOTYPE,
        };
        let p_art: PrototypeArtifact = read_artifact(dir, proto_name, "build-prototype")?;
        self.check(&p_art.header)?;
        let emb = self.load_embeddings()?;
        let model = NerModel::from_store(n_art.params.into_store()?, n_art.tags, n_art.config, n_art.matcher_hash)?;
        Ok((emb.table, matcher, model, p_art.table))
    }

    /// Tags the test corpus, writes predictions and an [`EvalReport`].
    pub fn evaluate(&self) -> Result<EvalReport> {
        let cfg = &self.config;
        // models first, so a missing artifact is reported before data problems
        let (table, matcher, model, prototype) = self.load_models()?;
        let test_path = cfg.require(&cfg.paths.test_corpus, "paths.test_corpus (--gold)")?;
        let test = read_corpus(test_path, cfg.corpus.read_options())?;
        let dir = self.dir()?;

        let mut gold = Vec::with_capacity(test.len());
        let mut pred = Vec::with_capacity(test.len());
        let mut out = String::new();
        for s in &test {
            let p = model.predict(&matcher, Some(&prototype), &table.embed(&s.words()))?;
            let gold_tags = tags_from_spans(&s.mentions, s.len(), TagScheme::Bioes);
            for ((tok, g), t) in s.tokens.iter().zip(&gold_tags).zip(&p.tags) {
                out.push_str(&format!("{} {} {}\n", tok.surface, g, t));
            }
            out.push('\n');
            gold.push(s.mentions.clone());
            pred.push(p.mentions);
        }
        let path = dir.join(PREDICTIONS);
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(&path, e))?;

        let mut report = entity_f1(&gold, &pred)?;
        let mut echo = cfg.clone();
        echo.paths.out_dir = None;
        report.config_hash = Some(self.hash());
        report.config = Some(serde_json::to_value(&echo)?);
        write_json(&dir.join(REPORT), &report)?;
        info!("entity F1 {:.4} on {} sentences", report.overall.f1, report.sentences);
        Ok(report)
    }

    /// annotate → train-matcher → build-prototype → train-ner → evaluate.
    pub fn run_all(&self) -> Result<EvalReport> {
        self.annotate()?;
        self.train_matcher()?;
        self.build_prototype()?;
        self.train_ner()?;
        self.evaluate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset: DatasetStats,
    pub annotation: Option<AnnotationSummary>,
}

impl StatsReport {
    pub fn table(&self) -> String {
        let d = &self.dataset;
        let mut out = format!(
            "classes    {} ({})\nsentences  {}\nentities   {}\nlength     ",
            d.n_classes,
            d.classes.join(", "),
            d.n_sentences,
            d.n_entities
        );
        let buckets: Vec<String> = crate::corpus::LENGTH_BUCKETS
            .iter()
            .zip(d.length_histogram)
            .map(|(b, p)| format!("{b}: {p:.2}%"))
            .collect();
        out.push_str(&buckets.join("  "));
        out.push('\n');
        if let Some(a) = &self.annotation {
            out.push_str(&format!(
                "triggers   mean {:.2} per entity, {} entities without triggers\n",
                a.mean_triggers_per_entity, a.empty_trigger_entities
            ));
            for (count, share) in &a.trigger_count_histogram {
                out.push_str(&format!("  {count:>3} triggers: {:.2}%\n", share * 100.0));
            }
        }
        out
    }
}

/// Corpus statistics; with parses also the trigger-count distribution.
pub fn stats(corpus: &Path, opts: ReadOptions, parses: Option<&Path>, trigger: &TriggerConfig) -> Result<StatsReport> {
    let mut sentences = read_corpus(corpus, opts)?;
    let dataset = compute_stats(&sentences)?;
    let annotation = match parses {
        Some(p) => Some(summarize(&annotate_with_parses(&mut sentences, read_conllu_parses(p)?, trigger)?)),
        None => None,
    };
    Ok(StatsReport { dataset, annotation })
}

/// Scores a prediction file against a gold file; both use their last
/// column as tags.
pub fn score_files(gold: &Path, pred: &Path, gold_opts: ReadOptions, pred_opts: ReadOptions) -> Result<EvalReport> {
    let g = read_column_corpus(gold, gold_opts)?;
    let p = read_column_corpus(pred, pred_opts)?;
    if g.len() != p.len() {
        return Err(Error::Alignment {
            sentence: g.len().min(p.len()),
            msg: format!("{} gold sentences, {} predicted", g.len(), p.len()),
        });
    }
    for (i, (a, b)) in g.iter().zip(&p).enumerate() {
        if a.len() != b.len() {
            return Err(Error::Alignment {
                sentence: i,
                msg: format!("{} gold tokens, {} predicted", a.len(), b.len()),
            });
        }
    }
    let gold: Vec<_> = g.into_iter().map(|s| s.mentions).collect();
    let pred: Vec<_> = p.into_iter().map(|s| s.mentions).collect();
    entity_f1(&gold, &pred)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub seeds: Vec<u64>,
    pub f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn table(&self) -> String {
        let mut out = format!("{:>8} {:>8}  per-seed\n", "#trig", "F1");
        for r in &self.rows {
            let per: Vec<String> = r.f1.iter().map(|f| format!("{:.2}", f * 100.0)).collect();
            out.push_str(&format!(
                "{:>7.0}% {:>8.2}  {}\n",
                r.fraction * 100.0,
                r.mean_f1 * 100.0,
                per.join(" ")
            ));
        }
        out
    }
}

pub fn sweep_dir(base: &Path, fraction: f64, seed: u64) -> PathBuf {
    base.join(format!("fraction-{fraction}-seed-{seed}"))
}

/// Full pipeline per fraction (and seed), each in its own subdirectory.
pub fn sweep(config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    if config.sweep.fractions.is_empty() {
        return Err(Error::Config("sweep.fractions is empty".into()));
    }
    let base = config.out_dir()?.to_path_buf();
    let seeds = if config.sweep.seeds.is_empty() {
        vec![config.seed]
    } else {
        config.sweep.seeds.clone()
    };
    let mut rows = Vec::new();
    for &fraction in &config.sweep.fractions {
        let mut f1 = Vec::new();
        for &seed in &seeds {
            let mut c = config.clone();
            c.corpus.fraction = fraction;
            c.seed = seed;
            c.paths.out_dir = Some(sweep_dir(&base, fraction, seed));
            info!("sweep: fraction {fraction}, seed {seed}");
            f1.push(Pipeline::new(c)?.run_all()?.overall.f1);
        }
        let mean_f1 = f1.iter().sum::<f64>() / f1.len() as f64;
        rows.push(SweepRow {
            fraction,
            seeds: seeds.clone(),
            f1,
            mean_f1,
        });
    }
    let report = SweepReport {
        config_hash: config.hash(),
        rows,
    };
    fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    write_json(&base.join("sweep.json"), &report)?;
    Ok(report)
}
