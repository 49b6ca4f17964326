//! Learned action tokenizers: a Perceiver VQ/RVQ codec, its training
//! objectives, information-theoretic diagnostics, baseline tokenizers and a
//! small autoregressive policy harness used to compare them.

pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod params;
pub mod policy;
pub mod quant;
pub mod tokenizer;
pub mod tokens;

pub use error::{Error, Result};
pub use tokenizer::Tokenizer;
pub use tokens::TokenSequence;
