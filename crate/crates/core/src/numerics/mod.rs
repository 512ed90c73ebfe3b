//! Minimal differentiable numeric core: dense matrices, a reverse-mode
//! tape, BiLSTM encoder, Adam, checkpoints and a finite-difference
//! gradient checker.

mod checkpoint;
mod gradcheck;
mod graph;
mod lstm;
mod matrix;
mod optim;
mod params;

pub use checkpoint::{load_params, save_params, Checkpoint, TensorRecord};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckEntry, GradCheckReport};
pub use graph::{sigmoid, CustomOp, Gradients, Graph, Var};
pub use lstm::{bilstm_encode, BiLstm, LstmParams};
pub use matrix::{log_sum_exp, softmax, Matrix};
pub use optim::{Adam, AdamConfig, TrainOptions};
pub use params::{ParamId, ParamStore};
