//! Decimal text rendering of the chunk, tokenized per character.

use crate::data::{ActionChunk, ChunkShape};
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

pub const ALPHABET: &[u8] = b"0123456789.-[], ";

#[derive(Debug, Clone, PartialEq)]
pub struct StringTokenizer {
    pub precision: usize,
}

impl StringTokenizer {
    pub fn new(precision: usize) -> Result<Self> {
        if !(1..=6).contains(&precision) {
            return Err(Error::InvalidConfig(format!(
                "string precision {precision} outside [1, 6]"
            )));
        }
        Ok(Self { precision })
    }

    /// `[[a, b], [c, d]]` with `precision` decimals.
    pub fn render(&self, chunk: &ActionChunk) -> String {
        let p = self.precision;
        let rows: Vec<String> = (0..chunk.horizon)
            .map(|t| {
                let vals: Vec<String> = chunk
                    .row(t)
                    .iter()
                    .map(|v| {
                        let s = format!("{v:.p$}");
                        // "-0.000" renders as "0.000"
                        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                            s[1..].to_string()
                        } else {
                            s
                        }
                    })
                    .collect();
                format!("[{}]", vals.join(", "))
            })
            .collect();
        format!("[{}]", rows.join(", "))
    }

    pub fn parse(text: &str, shape: &ChunkShape) -> Result<Vec<f64>> {
        let bad = || Error::InvalidActionString(text.chars().take(64).collect());
        let inner = text
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(bad)?;
        let mut values = Vec::with_capacity(shape.len());
        let mut rows = 0;
        let mut rest = inner.trim();
        while !rest.is_empty() {
            let body = rest.strip_prefix('[').ok_or_else(bad)?;
            let end = body.find(']').ok_or_else(bad)?;
            let row: Vec<f64> = body[..end]
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if row.len() != shape.action_dim || row.iter().any(|v| !v.is_finite()) {
                return Err(bad());
            }
            values.extend(row);
            rows += 1;
            rest = body[end + 1..].trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
                if rest.is_empty() {
                    return Err(bad());
                }
            } else if !rest.is_empty() {
                return Err(bad());
            }
        }
        if rows != shape.horizon {
            return Err(bad());
        }
        Ok(values)
    }
}

impl Tokenizer for StringTokenizer {
    fn name(&self) -> String {
        "string".into()
    }

    fn vocab_size(&self) -> usize {
        ALPHABET.len()
    }

    fn token_budget(&self, _shape: &ChunkShape) -> Option<usize> {
        None
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        if !chunk.is_finite() {
            return Err(Error::NonFinite("actions"));
        }
        let codes = self
            .render(chunk)
            .bytes()
            .map(|b| {
                ALPHABET
                    .iter()
                    .position(|&a| a == b)
                    .expect("rendered text uses the alphabet") as u32
            })
            .collect();
        Ok(TokenSequence::single(codes, chunk.embodiment_index))
    }

    fn decode(&self, tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk> {
        let text = tokens
            .primary()
            .iter()
            .map(|&c| {
                ALPHABET
                    .get(c as usize)
                    .map(|&b| b as char)
                    .ok_or(Error::TokenOutOfRange {
                        token: c,
                        vocab: ALPHABET.len(),
                    })
            })
            .collect::<Result<String>>()?;
        let values = Self::parse(&text, shape)?;
        ActionChunk::new(
            values,
            shape.horizon,
            shape.action_dim,
            shape.control_hz,
            shape.embodiment_index,
        )
    }
}
