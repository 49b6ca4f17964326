use crate::data::{ActionChunk, ChunkShape};
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;

/// Decodes `tokens`, substituting the all-zero chunk for any invalid stream
/// (out-of-range codes, wrong length for a fixed budget, decode errors).
pub fn decode_with_fallback(
    tokens: &TokenSequence,
    tokenizer: &dyn Tokenizer,
    shape: &ChunkShape,
) -> ActionChunk {
    let vocab = tokenizer.vocab_size();
    let in_range = tokens
        .levels
        .iter()
        .flatten()
        .all(|&c| (c as usize) < vocab);
    let length_ok = tokenizer
        .token_budget(shape)
        .is_none_or(|n| tokens.total_tokens() == n);
    if !(in_range && length_ok) {
        return ActionChunk::zeros(shape);
    }
    match tokenizer.decode(tokens, shape) {
        Ok(c) if c.is_finite() && c.actions.len() == shape.len() => c,
        _ => ActionChunk::zeros(shape),
    }
}
