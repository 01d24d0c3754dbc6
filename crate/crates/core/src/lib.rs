//! Weighting schemes for combining multi-layer contextual token embeddings,
//! evaluated inside a BiLSTM-CRF sequence tagger written from scratch.
//!
//! The crate is organised bottom-up:
//!
//! - [`embedstore`]: the MLEB binary embedding format, CoNLL corpora and alignment.
//! - [`mixer`]: individual-layer, concatenation, fixed-average and learned
//!   softmax-weighted (optionally subset) layer combination, with analytic gradients.
//! - [`neuralnet`]: linear layers, LSTM cells, bidirectional stacks and variational dropout.
//! - [`crf`]: linear-chain CRF likelihood, marginals and Viterbi decoding.
//! - [`optim`]: Adam with bias correction.
//! - [`metrics`]: token accuracy and exact-match chunk F1.
//! - [`synth`]: synthetic datasets with a single informative layer.
//! - [`harness`]: model assembly, multi-seed training and significance-tested comparison.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crf;
pub mod embedstore;
mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod mixer;
pub mod neuralnet;
pub mod optim;
pub mod synth;

pub use crate::embedstore::{AlignedDataset, EmbeddingDataset, LabeledCorpus, SentenceEmbedding, TagScheme};
pub use crate::error::{ConfigError, Error, Result, ShapeError};
pub use crate::harness::{ComparisonReport, ExperimentConfig, RunResult};
pub use crate::mixer::{MixParams, MixScheme};
