use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{concat_features, trigger_attention, TriggerAttentionParams};
use super::crf::{crf_nll_node, crf_viterbi};
use super::vocab::TagVocabulary;
use crate::corpus::tags::decode_bioes_lenient;
use crate::corpus::EntityMention;
use crate::error::{Error, Result};
use crate::matchnet::{EncoderView, MatchExample, PrototypeTable, TriggerMatcher, ENCODER_PREFIX};
use crate::numerics::{Adam, BiLstm, Graph, Matrix, ParamId, ParamStore, TrainOptions, Var};

pub const NER_ENCODER_PREFIX: &str = "ner.encoder";
const TRIGGER_ATTENTION_PREFIX: &str = "ner.trigger_attention";

/// Whether the tagger shares its encoder with the trigger representation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    #[default]
    Separate,
    Merge,
}

impl FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "separate" => Ok(EncoderMode::Separate),
            "merge" => Ok(EncoderMode::Merge),
            other => Err(Error::Config(format!("unknown encoder mode `{other}` (separate|merge)"))),
        }
    }
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Separate => "separate",
            EncoderMode::Merge => "merge",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NerConfig {
    pub mode: EncoderMode,
    /// Hidden units per direction. Must equal the matcher's so that `g_t`
    /// and the tagger's hidden states have the same width.
    pub hidden_size: usize,
    pub attention_dim: usize,
    /// `false` gives the plain BiLSTM-CRF baseline.
    pub trigger_attention: bool,
    /// Restrict Viterbi to BIOES-legal transitions.
    pub constrained_decoding: bool,
}

impl Default for NerConfig {
    fn default() -> Self {
        NerConfig {
            mode: EncoderMode::Separate,
            hidden_size: 100,
            attention_dim: 100,
            trigger_attention: true,
            constrained_decoding: false,
        }
    }
}

impl NerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.attention_dim == 0 {
            return Err(Error::Config("NER dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// One replicated training sentence: gold BIOES ids and the trigger indices
/// of its kept entity (empty for entity-free sentences).
#[derive(Clone, Debug)]
pub struct NerExample {
    pub embedded: Matrix,
    pub tags: Vec<usize>,
    pub triggers: Vec<usize>,
    pub sentence_id: usize,
}

/// Parameter handles of the tagger; values live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct NerNet {
    pub encoder: BiLstm,
    pub attention: Option<TriggerAttentionParams>,
    pub emission_w: ParamId,
    pub emission_b: ParamId,
    pub transitions: ParamId,
    pub tags: TagVocabulary,
    pub config: NerConfig,
}

impl NerNet {
    fn emissions<R: Rng>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        embedded: &Matrix,
        g_t: &[f64],
        dropout: f64,
        rng: &mut R,
    ) -> Result<Var> {
        let x = g.constant(embedded.clone());
        let x = g.dropout(x, dropout, rng)?;
        let h = self.encoder.encode(g, store, x)?;
        let h = g.dropout(h, dropout, rng)?;
        let features = match &self.attention {
            Some(att) => {
                let t = g.constant(Matrix::row_vector(g_t));
                let (_, weighted) = trigger_attention(g, store, att, h, t)?;
                concat_features(g, h, weighted)?
            }
            None => h,
        };
        let w = g.param(store, self.emission_w);
        let b = g.param(store, self.emission_b);
        let e = g.matmul(features, w)?;
        g.add_row_broadcast(e, b)
    }

    fn mask(&self) -> Option<Vec<Vec<bool>>> {
        self.config.constrained_decoding.then(|| self.tags.transition_mask())
    }
}

/// CRF negative log-likelihood of one example given its (constant) trigger
/// vector.
pub fn ner_loss<R: Rng>(
    g: &mut Graph,
    net: &NerNet,
    store: &ParamStore,
    example: &NerExample,
    g_t: &[f64],
    dropout: f64,
    rng: &mut R,
) -> Result<Var> {
    if example.tags.len() != example.embedded.rows() {
        return Err(Error::Shape(format!(
            "sentence {}: {} tags for {} tokens",
            example.sentence_id,
            example.tags.len(),
            example.embedded.rows()
        )));
    }
    let e = net.emissions(g, store, &example.embedded, g_t, dropout, rng)?;
    let t = g.param(store, net.transitions);
    crf_nll_node(g, e, t, &example.tags)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tags: Vec<String>,
    pub mentions: Vec<EntityMention>,
    /// Index and squared distance of the retrieved prototype, if any.
    pub retrieved: Option<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct NerModel {
    pub store: ParamStore,
    pub net: NerNet,
    /// Content hash of the matcher this model was trained against.
    pub matcher_hash: String,
}

impl NerModel {
    pub fn new(matcher: &TriggerMatcher, tags: TagVocabulary, config: NerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if tags.is_empty() {
            return Err(Error::Argument("empty tag vocabulary".into()));
        }
        if config.hidden_size != matcher.config.hidden_size {
            return Err(Error::Config(format!(
                "NER hidden size {} differs from matcher hidden size {}",
                config.hidden_size, matcher.config.hidden_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(seed);
        let input = matcher.input_dim();
        let encoder = match config.mode {
            EncoderMode::Separate => BiLstm::new(&mut store, NER_ENCODER_PREFIX, input, config.hidden_size, &mut rng)?,
            EncoderMode::Merge => {
                let enc = BiLstm::new(&mut store, NER_ENCODER_PREFIX, input, config.hidden_size, &mut rng)?;
                store.copy_prefixed(&matcher.store, ENCODER_PREFIX, NER_ENCODER_PREFIX)?;
                enc
            }
        };
        let d = encoder.output_size();
        let attention = if config.trigger_attention {
            Some(TriggerAttentionParams::new(
                &mut store,
                TRIGGER_ATTENTION_PREFIX,
                d,
                matcher.output_size(),
                config.attention_dim,
                &mut rng,
            )?)
        } else {
            None
        };
        let feature_dim = if attention.is_some() { 2 * d } else { d };
        let k = tags.len();
        let emission_w = store.add_uniform("ner.emission.w", feature_dim, k, feature_dim, &mut rng)?;
        let emission_b = store.add_zeros("ner.emission.b", 1, k)?;
        let transitions = store.add_zeros("ner.crf.transitions", k + 2, k + 2)?;
        Ok(NerModel {
            store,
            net: NerNet {
                encoder,
                attention,
                emission_w,
                emission_b,
                transitions,
                tags,
                config,
            },
            matcher_hash: matcher.store.content_hash(),
        })
    }

    /// Rebuilds handles from a loaded store.
    pub fn from_store(store: ParamStore, tags: TagVocabulary, config: NerConfig, matcher_hash: String) -> Result<Self> {
        let encoder = BiLstm::from_store(&store, NER_ENCODER_PREFIX)?;
        let attention = if config.trigger_attention {
            Some(TriggerAttentionParams::from_store(&store, TRIGGER_ATTENTION_PREFIX)?)
        } else {
            None
        };
        let k = tags.len();
        let emission_w = store.expect("ner.emission.w")?;
        let emission_b = store.expect("ner.emission.b")?;
        let transitions = store.expect("ner.crf.transitions")?;
        let feature_dim = encoder.output_size() * if attention.is_some() { 2 } else { 1 };
        store.value(emission_w).expect_shape((feature_dim, k), "emission weights")?;
        store.value(emission_b).expect_shape((1, k), "emission bias")?;
        store.value(transitions).expect_shape((k + 2, k + 2), "CRF transitions")?;
        Ok(NerModel {
            store,
            net: NerNet {
                encoder,
                attention,
                emission_w,
                emission_b,
                transitions,
                tags,
                config,
            },
            matcher_hash,
        })
    }

    /// Encoder + attention used for `g_s` and `g_t`: the matcher's own in
    /// separate mode, this model's encoder with the matcher's attention in
    /// merge mode.
    pub fn match_view<'a>(&'a self, matcher: &'a TriggerMatcher) -> EncoderView<'a> {
        match self.net.config.mode {
            EncoderMode::Separate => matcher.view(),
            EncoderMode::Merge => EncoderView {
                encoder_store: &self.store,
                encoder: &self.net.encoder,
                attention_store: &matcher.store,
                attention: &matcher.attention,
            },
        }
    }

    /// `g_t` for a trigger set; zeros when the set is empty.
    pub fn trigger_vector(&self, matcher: &TriggerMatcher, embedded: &Matrix, triggers: &[usize]) -> Result<Vec<f64>> {
        if triggers.is_empty() {
            return Ok(vec![0.0; matcher.output_size()]);
        }
        self.match_view(matcher).trigger_values(embedded, triggers)
    }

    pub fn build_prototype(&self, matcher: &TriggerMatcher, examples: &[MatchExample]) -> Result<PrototypeTable> {
        crate::matchnet::build_prototype(self.match_view(matcher), examples)
    }

    pub fn loss<R: Rng>(&self, g: &mut Graph, example: &NerExample, g_t: &[f64], dropout: f64, rng: &mut R) -> Result<Var> {
        ner_loss(g, &self.net, &self.store, example, g_t, dropout, rng)
    }

    /// Tags a sentence. With trigger attention the sentence vector retrieves
    /// the nearest prototype, whose trigger vector drives the attention.
    pub fn predict(&self, matcher: &TriggerMatcher, prototype: Option<&PrototypeTable>, embedded: &Matrix) -> Result<Prediction> {
        let (g_t, retrieved) = if self.net.attention.is_some() {
            let table = prototype.ok_or_else(|| Error::Argument("trigger attention needs a prototype table".into()))?;
            let g_s = self.match_view(matcher).sentence_values(embedded)?;
            let (idx, dist) = table.retrieve(&g_s)?;
            (table.entries[idx].vector.clone(), Some((idx, dist)))
        } else {
            (Vec::new(), None)
        };
        self.predict_with(embedded, &g_t, retrieved)
    }

    /// Tags a sentence against a given trigger vector.
    pub fn predict_with(&self, embedded: &Matrix, g_t: &[f64], retrieved: Option<(usize, f64)>) -> Result<Prediction> {
        let mut g = Graph::new();
        let e = self
            .net
            .emissions(&mut g, &self.store, embedded, g_t, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?;
        let mask = self.net.mask();
        let (path, _) = crf_viterbi(g.value(e), self.store.value(self.net.transitions), mask.as_deref())?;
        let tags = self.net.tags.decode(&path);
        let mentions = decode_bioes_lenient(&tags);
        Ok(Prediction {
            tags,
            mentions,
            retrieved,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Trains the tagger against a frozen matcher. Fails if the matcher's
/// parameters change during training.
pub fn train_ner(
    examples: &[NerExample],
    matcher: &TriggerMatcher,
    tags: TagVocabulary,
    config: &NerConfig,
    opts: &TrainOptions,
) -> Result<(NerModel, Vec<NerEpoch>)> {
    opts.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("no NER training examples".into()));
    }
    let frozen = matcher.store.content_hash();
    let mut model = NerModel::new(matcher, tags, config.clone(), opts.seed)?;
    let mut adam = Adam::new(&model.store, opts.adam.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(opts.epochs);

    // trigger vectors are constants of the loss; in separate mode they never
    // change, in merge mode they follow the shared encoder
    let use_triggers = config.trigger_attention;
    let compute_gt = |model: &NerModel, ex: &NerExample| -> Result<Vec<f64>> {
        if use_triggers {
            model.trigger_vector(matcher, &ex.embedded, &ex.triggers)
        } else {
            Ok(Vec::new())
        }
    };
    let fixed: Option<Vec<Vec<f64>>> = match config.mode {
        EncoderMode::Separate => Some(examples.iter().map(|ex| compute_gt(&model, ex)).collect::<Result<_>>()?),
        EncoderMode::Merge => None,
    };

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opts.batch_size) {
            let gts: Vec<Vec<f64>> = match &fixed {
                Some(all) => chunk.iter().map(|&i| all[i].clone()).collect(),
                None => chunk.iter().map(|&i| compute_gt(&model, &examples[i])).collect::<Result<_>>()?,
            };
            let mut g = Graph::new();
            let mut terms = Vec::with_capacity(chunk.len());
            for (&i, gt) in chunk.iter().zip(&gts) {
                terms.push(model.loss(&mut g, &examples[i], gt, opts.dropout, &mut rng)?);
            }
            let loss = g.mean(&terms)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("NER loss at epoch {epoch}")));
            }
            let grads = g.backward(loss)?;
            model.store.zero_grads();
            g.accumulate(&grads, &mut model.store);
            if let Some(c) = opts.grad_clip {
                model.store.clip_grad_norm(c);
            }
            adam.update(&mut model.store)?;
            loss_sum += value;
            batches += 1;
        }
        let record = NerEpoch {
            epoch,
            mean_loss: loss_sum / batches as f64,
        };
        debug!("ner epoch {epoch}: loss {:.6}", record.mean_loss);
        log.push(record);
    }
    if matcher.store.content_hash() != frozen {
        return Err(Error::FrozenMutation("matcher parameters changed during NER training".into()));
    }
    if let Some(last) = log.last() {
        info!("ner trained: final loss {:.6}", last.mean_loss);
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchnet::MatchConfig;
    use crate::nernet::crf::crf_nll;
    use crate::numerics::{grad_check, AdamConfig, GradCheckConfig};

    fn matcher(dim: usize) -> TriggerMatcher {
        let cfg = MatchConfig {
            hidden_size: 3,
            attention_dim: 4,
            ..MatchConfig::default()
        };
        TriggerMatcher::new(dim, cfg, 7).unwrap()
    }

    fn small(mode: EncoderMode, trigger_attention: bool) -> NerConfig {
        NerConfig {
            mode,
            hidden_size: 3,
            attention_dim: 3,
            trigger_attention,
            constrained_decoding: true,
        }
    }

    fn toy(dim: usize, seed: u64) -> Vec<NerExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // tags over {O, B-X, I-X, E-X, S-X}: a valid BIOES sequence per example
        let seqs = [vec![0, 4, 0, 1, 3], vec![1, 2, 3, 0], vec![0, 0, 4]];
        seqs.iter()
            .enumerate()
            .map(|(i, tags)| {
                let data = (0..tags.len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                NerExample {
                    embedded: Matrix::from_vec(tags.len(), dim, data).unwrap(),
                    tags: tags.clone(),
                    triggers: if i == 2 { vec![] } else { vec![0, 2] },
                    sentence_id: i,
                }
            })
            .collect()
    }

    fn check_gradients(mode: EncoderMode, trigger_attention: bool) {
        let m = matcher(4);
        let examples = toy(4, 1);
        let tags = TagVocabulary::from_classes(&["X"]).unwrap();
        let mut model = NerModel::new(&m, tags, small(mode, trigger_attention), 3).unwrap();
        // give the CRF non-trivial transitions
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for x in model.store.value_mut(model.net.transitions).as_mut_slice() {
            *x = r.random_range(-0.5..0.5);
        }
        let gts: Vec<Vec<f64>> = examples
            .iter()
            .map(|ex| model.trigger_vector(&m, &ex.embedded, &ex.triggers).unwrap())
            .collect();
        let net = model.net.clone();
        let cfg = GradCheckConfig {
            coords_per_tensor: Some(10),
            ..GradCheckConfig::default()
        };
        let report = grad_check(
            |store| {
                let mut g = Graph::new();
                let mut terms = Vec::new();
                for (ex, gt) in examples.iter().zip(&gts) {
                    terms.push(ner_loss(&mut g, &net, store, ex, gt, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?);
                }
                let loss = g.mean(&terms)?;
                let v = g.value(loss).item();
                let grads = g.backward(loss)?;
                g.accumulate(&grads, store);
                Ok(v)
            },
            &mut model.store,
            &cfg,
        )
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error());
    }

    #[test]
    fn gradients_separate_mode() {
        check_gradients(EncoderMode::Separate, true);
    }

    #[test]
    fn gradients_merge_mode() {
        check_gradients(EncoderMode::Merge, true);
    }

    #[test]
    fn gradients_baseline() {
        check_gradients(EncoderMode::Separate, false);
    }

    #[test]
    fn loss_node_equals_crf_nll_of_emissions() {
        let m = matcher(3);
        let tags = TagVocabulary::from_classes(&["X"]).unwrap();
        let model = NerModel::new(&m, tags, small(EncoderMode::Separate, true), 1).unwrap();
        let ex = &toy(3, 2)[0];
        let gt = model.trigger_vector(&m, &ex.embedded, &ex.triggers).unwrap();
        let mut g = Graph::new();
        let loss = model.loss(&mut g, ex, &gt, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut g2 = Graph::new();
        let e = model
            .net
            .emissions(&mut g2, &model.store, &ex.embedded, &gt, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let direct = crf_nll(g2.value(e), model.store.value(model.net.transitions), &ex.tags).unwrap();
        assert!((g.value(loss).item() - direct).abs() < 1e-12);
    }

    #[test]
    fn merge_mode_starts_from_matcher_encoder() {
        let m = matcher(4);
        let tags = TagVocabulary::from_classes(&["X"]).unwrap();
        let model = NerModel::new(&m, tags, small(EncoderMode::Merge, true), 9).unwrap();
        let ex = &toy(4, 0)[0];
        assert_eq!(
            model.match_view(&m).sentence_values(&ex.embedded).unwrap(),
            m.view().sentence_values(&ex.embedded).unwrap()
        );
        assert_eq!(model.trigger_vector(&m, &ex.embedded, &[]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn training_fits_toy_data_and_leaves_matcher_untouched() {
        let m = matcher(4);
        let before = m.store.content_hash();
        let examples = toy(4, 4);
        let tags = TagVocabulary::from_classes(&["X"]).unwrap();
        let opts = TrainOptions {
            epochs: 60,
            batch_size: 3,
            dropout: 0.0,
            adam: AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            ..TrainOptions::default()
        };
        for mode in [EncoderMode::Separate, EncoderMode::Merge] {
            let (model, log) = train_ner(&examples, &m, tags.clone(), &small(mode, true), &opts).unwrap();
            assert!(log.last().unwrap().mean_loss < 0.1 * log[0].mean_loss, "{mode}: {log:?}");
            for ex in &examples {
                let gt = model.trigger_vector(&m, &ex.embedded, &ex.triggers).unwrap();
                let p = model.predict_with(&ex.embedded, &gt, None).unwrap();
                assert_eq!(model.net.tags.encode(&p.tags).unwrap(), ex.tags);
            }
        }
        assert_eq!(m.store.content_hash(), before);
    }

    #[test]
    fn predict_requires_prototype_with_attention() {
        let m = matcher(3);
        let tags = TagVocabulary::from_classes(&["X"]).unwrap();
        let model = NerModel::new(&m, tags.clone(), small(EncoderMode::Separate, true), 0).unwrap();
        let x = Matrix::zeros(2, 3);
        assert!(model.predict(&m, None, &x).is_err());
        let baseline = NerModel::new(&m, tags, small(EncoderMode::Separate, false), 0).unwrap();
        let p = baseline.predict(&m, None, &x).unwrap();
        assert_eq!(p.tags.len(), 2);
        assert!(p.retrieved.is_none());
    }

    #[test]
    fn hidden_size_must_match_matcher() {
        let m = matcher(3);
        let tags = TagVocabulary::from_classes(&["X"]).unwrap();
        let cfg = NerConfig {
            hidden_size: 2,
            ..small(EncoderMode::Separate, true)
        };
        assert!(matches!(NerModel::new(&m, tags, cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn from_store_round_trip() {
        let m = matcher(3);
        let tags = TagVocabulary::from_classes(&["X", "Y"]).unwrap();
        let model = NerModel::new(&m, tags.clone(), small(EncoderMode::Merge, true), 0).unwrap();
        let back = NerModel::from_store(model.store.clone(), tags, model.net.config.clone(), model.matcher_hash.clone()).unwrap();
        let x = Matrix::filled(3, 3, 0.25);
        let gt = vec![0.1; 6];
        assert_eq!(model.predict_with(&x, &gt, None).unwrap(), back.predict_with(&x, &gt, None).unwrap());
    }
}
