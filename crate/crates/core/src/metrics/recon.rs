//! Reconstruction error through a tokenizer round trip.

use serde::{Deserialize, Serialize};

use crate::data::ActionChunk;
use crate::tokenizer::Tokenizer;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    /// Mean squared error.
    L2,
}

/// Mean per-element error between each chunk and `decode(encode(chunk))`.
pub fn recon_error(tokenizer: &dyn Tokenizer, chunks: &[&ActionChunk], norm: Norm) -> Result<f64> {
    let tokens = tokenizer.encode_batch(chunks)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (chunk, t) in chunks.iter().zip(&tokens) {
        let rec = tokenizer.decode(t, &chunk.shape())?;
        for (a, b) in chunk.actions.iter().zip(&rec.actions) {
            let e = a - b;
            sum += match norm {
                Norm::L1 => e.abs(),
                Norm::L2 => e * e,
            };
        }
        count += chunk.actions.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
