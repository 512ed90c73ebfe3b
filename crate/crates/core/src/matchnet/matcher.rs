use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attend_pool, trigger_rows, AttentionParams};
use super::loss::{make_negatives, match_loss_node};
use crate::error::{Error, Result};
use crate::numerics::{Adam, BiLstm, Graph, Matrix, ParamStore, TrainOptions, Var};

pub const ENCODER_PREFIX: &str = "matcher.encoder";
pub const ATTENTION_PREFIX: &str = "matcher.attention";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub margin: f64,
    /// Derangement rounds per batch; each gives every positive one negative.
    pub negatives_per_positive: usize,
    pub attention_dim: usize,
    /// Hidden units per LSTM direction.
    pub hidden_size: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            margin: 1.0,
            negatives_per_positive: 1,
            attention_dim: 100,
            hidden_size: 100,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.attention_dim == 0 || self.hidden_size == 0 {
            return Err(Error::Config("matcher dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// An embedded sentence with the trigger indices of one of its entities.
#[derive(Clone, Debug)]
pub struct MatchExample {
    pub embedded: Matrix,
    pub triggers: Vec<usize>,
    pub sentence_id: usize,
    pub label: String,
}

/// Borrowed encoder + attention pair, possibly living in different stores.
/// The NER model in merge mode pairs its own encoder with the matcher's
/// frozen attention.
#[derive(Clone, Copy)]
pub struct EncoderView<'a> {
    pub encoder_store: &'a ParamStore,
    pub encoder: &'a BiLstm,
    pub attention_store: &'a ParamStore,
    pub attention: &'a AttentionParams,
}

impl EncoderView<'_> {
    pub fn output_size(&self) -> usize {
        self.encoder.output_size()
    }

    /// `L × 2h` hidden states, with dropout on the input and output when
    /// `dropout > 0`.
    pub fn encode<R: Rng>(&self, g: &mut Graph, embedded: &Matrix, dropout: f64, rng: &mut R) -> Result<Var> {
        let x = g.constant(embedded.clone());
        let x = g.dropout(x, dropout, rng)?;
        let h = self.encoder.encode(g, self.encoder_store, x)?;
        g.dropout(h, dropout, rng)
    }

    pub fn sentence_vector(&self, g: &mut Graph, h: Var) -> Result<Var> {
        Ok(attend_pool(g, self.attention_store, self.attention, h)?.1)
    }

    pub fn trigger_vector(&self, g: &mut Graph, h: Var, triggers: &[usize]) -> Result<Var> {
        let rows = trigger_rows(g, h, triggers)?;
        Ok(attend_pool(g, self.attention_store, self.attention, rows)?.1)
    }

    /// Dropout-free `g_s`.
    pub fn sentence_values(&self, embedded: &Matrix) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let h = self.encode(&mut g, embedded, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?;
        let v = self.sentence_vector(&mut g, h)?;
        Ok(g.value(v).as_slice().to_vec())
    }

    /// Dropout-free `g_t`.
    pub fn trigger_values(&self, embedded: &Matrix, triggers: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let h = self.encode(&mut g, embedded, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?;
        let v = self.trigger_vector(&mut g, h, triggers)?;
        Ok(g.value(v).as_slice().to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct TriggerMatcher {
    pub store: ParamStore,
    pub encoder: BiLstm,
    pub attention: AttentionParams,
    pub config: MatchConfig,
}

impl TriggerMatcher {
    pub fn new(input_dim: usize, config: MatchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(seed);
        let encoder = BiLstm::new(&mut store, ENCODER_PREFIX, input_dim, config.hidden_size, &mut rng)?;
        let attention = AttentionParams::new(
            &mut store,
            ATTENTION_PREFIX,
            encoder.output_size(),
            config.attention_dim,
            &mut rng,
        )?;
        Ok(TriggerMatcher {
            store,
            encoder,
            attention,
            config,
        })
    }

    /// Rebuilds handles from a loaded parameter store.
    pub fn from_store(store: ParamStore, mut config: MatchConfig) -> Result<Self> {
        let encoder = BiLstm::from_store(&store, ENCODER_PREFIX)?;
        let attention = AttentionParams::from_store(&store, ATTENTION_PREFIX)?;
        if attention.input_dim != encoder.output_size() {
            return Err(Error::Shape("matcher attention does not match encoder width".into()));
        }
        config.hidden_size = encoder.output_size() / 2;
        config.attention_dim = attention.attention_dim;
        Ok(TriggerMatcher {
            store,
            encoder,
            attention,
            config,
        })
    }

    pub fn view(&self) -> EncoderView<'_> {
        EncoderView {
            encoder_store: &self.store,
            encoder: &self.encoder,
            attention_store: &self.store,
            attention: &self.attention,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn output_size(&self) -> usize {
        self.encoder.output_size()
    }
}

/// Mean contrastive loss over a batch: one positive per example plus one
/// negative per example for each derangement in `negatives`.
pub fn matcher_batch_loss<R: Rng>(
    g: &mut Graph,
    view: EncoderView<'_>,
    batch: &[&MatchExample],
    negatives: &[Vec<usize>],
    margin: f64,
    dropout: f64,
    rng: &mut R,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Empty("matcher batch".into()));
    }
    let mut gs = Vec::with_capacity(batch.len());
    let mut gt = Vec::with_capacity(batch.len());
    for ex in batch {
        let h = view.encode(g, &ex.embedded, dropout, rng)?;
        gs.push(view.sentence_vector(g, h)?);
        gt.push(view.trigger_vector(g, h, &ex.triggers)?);
    }
    let mut terms = Vec::with_capacity(batch.len() * (1 + negatives.len()));
    for i in 0..batch.len() {
        terms.push(match_loss_node(g, gs[i], gt[i], true, margin)?);
    }
    for perm in negatives {
        if perm.len() != batch.len() {
            return Err(Error::Shape(format!("negative permutation of {} for batch of {}", perm.len(), batch.len())));
        }
        for (i, &j) in perm.iter().enumerate() {
            terms.push(match_loss_node(g, gs[i], gt[j], false, margin)?);
        }
    }
    g.mean(&terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean squared distance between `g_s` and its own `g_t`, without dropout.
    pub positive_distance: f64,
}

fn mean_positive_distance(view: EncoderView<'_>, examples: &[MatchExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let s = view.sentence_values(&ex.embedded)?;
        let t = view.trigger_values(&ex.embedded, &ex.triggers)?;
        total += s.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / examples.len() as f64)
}

/// Trains a fresh matcher on examples that all have non-empty triggers.
pub fn train_matcher(
    examples: &[MatchExample],
    input_dim: usize,
    config: &MatchConfig,
    opts: &TrainOptions,
) -> Result<(TriggerMatcher, Vec<MatcherEpoch>)> {
    opts.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("no matcher training examples".into()));
    }
    if let Some(ex) = examples.iter().find(|e| e.triggers.is_empty()) {
        return Err(Error::Argument(format!("sentence {} has an empty trigger set", ex.sentence_id)));
    }
    if examples.len() % opts.batch_size == 1 && config.negatives_per_positive > 0 {
        warn!(
            "{} examples with batch size {} leave a final batch of one, which trains on positives only",
            examples.len(),
            opts.batch_size
        );
    }
    let mut matcher = TriggerMatcher::new(input_dim, config.clone(), opts.seed)?;
    let mut adam = Adam::new(&matcher.store, opts.adam.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(opts.epochs);

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<&MatchExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let negatives = make_negatives(batch.len(), config.negatives_per_positive, &mut rng);
            let mut g = Graph::new();
            let loss = matcher_batch_loss(
                &mut g,
                matcher.view(),
                &batch,
                &negatives,
                config.margin,
                opts.dropout,
                &mut rng,
            )?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("matcher loss at epoch {epoch}")));
            }
            let grads = g.backward(loss)?;
            matcher.store.zero_grads();
            g.accumulate(&grads, &mut matcher.store);
            if let Some(c) = opts.grad_clip {
                matcher.store.clip_grad_norm(c);
            }
            adam.update(&mut matcher.store)?;
            loss_sum += value;
            batches += 1;
        }
        let positive_distance = mean_positive_distance(matcher.view(), examples)?;
        let record = MatcherEpoch {
            epoch,
            mean_loss: loss_sum / batches as f64,
            positive_distance,
        };
        debug!("matcher epoch {epoch}: loss {:.6} positive distance {:.6}", record.mean_loss, positive_distance);
        log.push(record);
    }
    if let Some(last) = log.last() {
        info!("matcher trained: final loss {:.6}", last.mean_loss);
    }
    Ok((matcher, log))
}
