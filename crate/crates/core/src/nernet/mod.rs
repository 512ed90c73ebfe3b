//! Trigger-attentive BiLSTM-CRF tagger.

mod attention;
mod crf;
mod model;
mod vocab;

pub use attention::{concat_features, trigger_attention, trigger_attention_values, TriggerAttentionParams};
pub use crf::{
    crf_log_partition, crf_marginals, crf_nll, crf_nll_node, crf_viterbi, path_score, start_index, stop_index,
};
pub use model::{
    ner_loss, train_ner, EncoderMode, NerConfig, NerEpoch, NerExample, NerModel, Prediction, NER_ENCODER_PREFIX,
};
pub use vocab::TagVocabulary;
