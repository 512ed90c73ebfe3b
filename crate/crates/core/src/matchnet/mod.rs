//! Trigger match network: a BiLSTM encoder with self-attention pooling
//! that maps a sentence to `g_s` and its trigger tokens to `g_t`, trained
//! with a contrastive margin loss against in-batch negatives.

mod attention;
mod loss;
mod matcher;
mod prototype;

pub use attention::{attend_pool, attend_pool_values, trigger_rows, AttentionParams};
pub use loss::{make_negatives, match_loss, match_loss_node};
pub use matcher::{
    matcher_batch_loss, train_matcher, EncoderView, MatchConfig, MatchExample, MatcherEpoch, TriggerMatcher,
    ATTENTION_PREFIX, ENCODER_PREFIX,
};
pub use prototype::{build_prototype, PrototypeEntry, PrototypeTable};
