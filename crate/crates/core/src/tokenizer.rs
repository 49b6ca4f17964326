use crate::data::{ActionChunk, ChunkShape};
use crate::tokens::TokenSequence;
use crate::{Error, Result};

/// Common interface of every action tokenizer: the learned codec and the
/// binning, string and DCT+BPE baselines.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> String;

    fn vocab_size(&self) -> usize;

    /// Tokens per chunk of the given shape, or `None` when the length varies
    /// with the content.
    fn token_budget(&self, shape: &ChunkShape) -> Option<usize>;

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence>;

    fn encode_batch(&self, chunks: &[&ActionChunk]) -> Result<Vec<TokenSequence>> {
        chunks.iter().map(|c| self.encode(c)).collect()
    }

    /// Reconstructs a chunk of `shape` from tokens.
    fn decode(&self, tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk>;
}

/// Each action element is coded as the index of its nearest value in a fixed
/// scalar codebook (ties to the lowest index). One token per element.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCodebookTokenizer {
    pub entries: Vec<f64>,
}

impl ScalarCodebookTokenizer {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() || entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "scalar codebook needs finite entries".into(),
            ));
        }
        Ok(Self { entries })
    }

    fn nearest(&self, x: f64) -> u32 {
        let mut best = 0;
        for (j, e) in self.entries.iter().enumerate() {
            if (x - e).abs() < (x - self.entries[best]).abs() {
                best = j;
            }
        }
        best as u32
    }
}

impl Tokenizer for ScalarCodebookTokenizer {
    fn name(&self) -> String {
        format!("scalar{}", self.entries.len())
    }

    fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    fn token_budget(&self, shape: &ChunkShape) -> Option<usize> {
        Some(shape.len())
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        if !chunk.is_finite() {
            return Err(Error::NonFinite("actions"));
        }
        Ok(TokenSequence::single(
            chunk.actions.iter().map(|&x| self.nearest(x)).collect(),
            chunk.embodiment_index,
        ))
    }

    fn decode(&self, tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk> {
        let codes = tokens.primary();
        if codes.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} tokens for {} elements",
                codes.len(),
                shape.len()
            )));
        }
        let values = codes
            .iter()
            .map(|&c| {
                self.entries
                    .get(c as usize)
                    .copied()
                    .ok_or(Error::TokenOutOfRange {
                        token: c,
                        vocab: self.entries.len(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        ActionChunk::new(
            values,
            shape.horizon,
            shape.action_dim,
            shape.control_hz,
            shape.embodiment_index,
        )
    }
}

/// Lossless reference: every element becomes its two 32-bit halves.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTokenizer;

impl Tokenizer for IdentityTokenizer {
    fn name(&self) -> String {
        "identity".into()
    }

    fn vocab_size(&self) -> usize {
        1 << 32
    }

    fn token_budget(&self, shape: &ChunkShape) -> Option<usize> {
        Some(2 * shape.len())
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        let codes = chunk
            .actions
            .iter()
            .flat_map(|v| {
                let bits = v.to_bits();
                [(bits >> 32) as u32, bits as u32]
            })
            .collect();
        Ok(TokenSequence::single(codes, chunk.embodiment_index))
    }

    fn decode(&self, tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk> {
        let codes = tokens.primary();
        if codes.len() != 2 * shape.len() {
            return Err(Error::Shape(format!(
                "{} tokens for {} elements",
                codes.len(),
                shape.len()
            )));
        }
        let values = codes
            .chunks_exact(2)
            .map(|p| f64::from_bits((u64::from(p[0]) << 32) | u64::from(p[1])))
            .collect();
        ActionChunk::new(
            values,
            shape.horizon,
            shape.action_dim,
            shape.control_hz,
            shape.embodiment_index,
        )
    }
}

/// Emits a single token and always decodes to the zero chunk.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTokenizer;

impl Tokenizer for ZeroTokenizer {
    fn name(&self) -> String {
        "zero".into()
    }

    fn vocab_size(&self) -> usize {
        1
    }

    fn token_budget(&self, _shape: &ChunkShape) -> Option<usize> {
        Some(1)
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        Ok(TokenSequence::single(vec![0], chunk.embodiment_index))
    }

    fn decode(&self, _tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk> {
        Ok(ActionChunk::zeros(shape))
    }
}
