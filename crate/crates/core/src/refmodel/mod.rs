// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic desk-scale decoder-only transformer.
//!
//! The model exists to provide exact traces and exact gradients of
//! `log π(y_t | h)` with respect to the last-position hidden state at any
//! layer. Blocks are pre-norm GPT style:
//!
//! ```text
//! x' = x + Attn(LN1(x))
//! y  = x' + MLP(LN2(x'))
//! ```
//!
//! `h^(0)` is the token + positional embedding and `h^(l)` the residual
//! output of block `l`. The final layer norm belongs to the output head, so
//! `h^(L)` is taken before it.

mod grad;
mod init;
mod linalg;
mod model;
mod tokenizer;
mod train;

pub use grad::{suffix_gradient, suffix_gradient_from_states, GradientVector};
pub use init::{draw_bits, splitmix64, symmetric_uniform};
pub use linalg::{l2_norm, layer_norm, log_softmax, softmax, LN_EPS};
pub use model::{
    build_model, forward_full, forward_trace, suffix_logprob, suffix_logprobs, Block, FullTrace,
    LayerTrace, Model, ModelConfig, Precision, TokenSequence,
};
pub use tokenizer::Tokenizer;
pub use train::{fit_head, HeadFitReport};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token {token} out of vocabulary (size {vocab})")]
    TokenOutOfVocab { token: u32, vocab: usize },
    #[error("layer {layer} out of range 0..={max}")]
    LayerOutOfRange { layer: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}
