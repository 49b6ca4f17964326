//! Uniform per-dimension binning, one token per action element.

use serde::{Deserialize, Serialize};

use crate::data::{ActionChunk, ChunkShape};
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    #[serde(default = "default_bins")]
    pub bins_per_dim: usize,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_bins() -> usize {
    1000
}
fn default_low() -> f64 {
    -1.0
}
fn default_high() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    8
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            bins_per_dim: default_bins(),
            low: default_low(),
            high: default_high(),
            horizon: default_horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinningTokenizer {
    pub config: BinningConfig,
}

impl BinningTokenizer {
    pub fn new(config: BinningConfig) -> Result<Self> {
        if config.bins_per_dim < 2 || config.bins_per_dim > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "bins_per_dim = {}",
                config.bins_per_dim
            )));
        }
        if !(config.low.is_finite() && config.high.is_finite() && config.low < config.high) {
            return Err(Error::InvalidConfig(
                "binning bounds must satisfy low < high".into(),
            ));
        }
        if config.horizon == 0 {
            return Err(Error::InvalidConfig(
                "binning horizon must be positive".into(),
            ));
        }
        Ok(Self { config })
    }

    pub fn bin_width(&self) -> f64 {
        (self.config.high - self.config.low) / self.config.bins_per_dim as f64
    }

    pub fn bin(&self, x: f64) -> u32 {
        let k = ((x - self.config.low) / self.bin_width()).floor();
        k.clamp(0.0, (self.config.bins_per_dim - 1) as f64) as u32
    }

    pub fn center(&self, k: u32) -> f64 {
        self.config.low + (k as f64 + 0.5) * self.bin_width()
    }
}

impl Tokenizer for BinningTokenizer {
    fn name(&self) -> String {
        "binning".into()
    }

    fn vocab_size(&self) -> usize {
        self.config.bins_per_dim
    }

    fn token_budget(&self, shape: &ChunkShape) -> Option<usize> {
        Some(shape.len())
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        if !chunk.is_finite() {
            return Err(Error::NonFinite("actions"));
        }
        Ok(TokenSequence::single(
            chunk.actions.iter().map(|&x| self.bin(x)).collect(),
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
                if (c as usize) < self.config.bins_per_dim {
                    Ok(self.center(c))
                } else {
                    Err(Error::TokenOutOfRange {
                        token: c,
                        vocab: self.config.bins_per_dim,
                    })
                }
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
