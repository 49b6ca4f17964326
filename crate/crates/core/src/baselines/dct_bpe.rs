//! Frequency-domain baseline: per-dimension orthonormal DCT-II, integer
//! quantization, then byte-pair merges over the integer stream.

use std::collections::HashMap;
use std::path::Path;

use rustdct::DctPlanner;
use serde::{Deserialize, Serialize};

use crate::data::{ActionChunk, ChunkShape};
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

/// Quantized coefficients are clamped to `[-OFFSET, OFFSET - 1]` and shifted
/// by `OFFSET`, giving 10-bit base symbols.
pub const OFFSET: i64 = 512;
pub const BASE_VOCAB: usize = 2 * OFFSET as usize;
pub const MIN_FIT_CHUNKS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DctBpeConfig {
    #[serde(default = "default_keep")]
    pub dct_keep: usize,
    #[serde(default = "default_scale")]
    pub quant_scale: f64,
    #[serde(default = "default_vocab")]
    pub bpe_vocab: usize,
    /// Ordered merges; merge `i` creates symbol `BASE_VOCAB + i`.
    #[serde(default)]
    pub merges: Vec<(u32, u32)>,
}

fn default_keep() -> usize {
    8
}
fn default_scale() -> f64 {
    10.0
}
fn default_vocab() -> usize {
    2048
}

impl Default for DctBpeConfig {
    fn default() -> Self {
        Self {
            dct_keep: default_keep(),
            quant_scale: default_scale(),
            bpe_vocab: default_vocab(),
            merges: Vec::new(),
        }
    }
}

impl DctBpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dct_keep == 0 {
            return Err(Error::InvalidConfig("dct_keep must be positive".into()));
        }
        if !(self.quant_scale.is_finite() && self.quant_scale > 0.0) {
            return Err(Error::InvalidConfig("quant_scale must be positive".into()));
        }
        if self.bpe_vocab < BASE_VOCAB {
            return Err(Error::InvalidConfig(format!(
                "bpe_vocab must be at least {BASE_VOCAB}"
            )));
        }
        if BASE_VOCAB + self.merges.len() > self.bpe_vocab {
            return Err(Error::InvalidConfig(
                "more merges than the vocabulary allows".into(),
            ));
        }
        for (i, &(a, b)) in self.merges.iter().enumerate() {
            let limit = (BASE_VOCAB + i) as u32;
            if a >= limit || b >= limit {
                return Err(Error::InvalidConfig(format!(
                    "merge {i} refers to a later symbol"
                )));
            }
        }
        Ok(())
    }

    pub fn save_merges(&self, path: &Path) -> Result<()> {
        let pairs: Vec<[u32; 2]> = self.merges.iter().map(|&(a, b)| [a, b]).collect();
        std::fs::write(path, serde_json::to_string(&pairs)?)?;
        Ok(())
    }

    pub fn load_merges(path: &Path) -> Result<Vec<(u32, u32)>> {
        let pairs: Vec<[u32; 2]> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(pairs.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

/// Orthonormal DCT-II of `signal`.
pub fn dct_forward(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = signal.to_vec();
    DctPlanner::new().plan_dct2(n).process_dct2(&mut buf);
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    buf.iter_mut()
        .enumerate()
        .for_each(|(k, v)| *v *= if k == 0 { s0 } else { sk });
    buf
}

/// Inverse of [`dct_forward`].
pub fn dct_inverse(coefs: &[f64]) -> Vec<f64> {
    let n = coefs.len();
    if n == 0 {
        return Vec::new();
    }
    let s0 = 2.0 / (n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    let mut buf: Vec<f64> = coefs
        .iter()
        .enumerate()
        .map(|(k, v)| v * if k == 0 { s0 } else { sk })
        .collect();
    DctPlanner::new().plan_dct3(n).process_dct3(&mut buf);
    buf
}

#[derive(Debug, Clone, PartialEq)]
pub struct DctBpeTokenizer {
    pub config: DctBpeConfig,
    ranks: HashMap<(u32, u32), u32>,
}

impl DctBpeTokenizer {
    pub fn new(config: DctBpeConfig) -> Result<Self> {
        config.validate()?;
        let ranks = config
            .merges
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect();
        Ok(Self { config, ranks })
    }

    /// Fits merges on `corpus` until `bpe_vocab` symbols exist or no pair
    /// repeats. Most frequent pair first; ties go to the smallest pair.
    pub fn fit(corpus: &[&ActionChunk], config: DctBpeConfig) -> Result<Self> {
        if corpus.len() < MIN_FIT_CHUNKS {
            return Err(Error::InsufficientData {
                embodiment: "dct_bpe corpus".into(),
                steps: corpus.len(),
                required: MIN_FIT_CHUNKS,
            });
        }
        let base = Self::new(DctBpeConfig {
            merges: Vec::new(),
            ..config
        })?;
        let mut seqs: Vec<Vec<u32>> = corpus
            .iter()
            .map(|c| base.integer_stream(c))
            .collect::<Result<_>>()?;
        let mut merges = Vec::new();
        while BASE_VOCAB + merges.len() < base.config.bpe_vocab {
            let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
            for s in &seqs {
                for w in s.windows(2) {
                    *counts.entry((w[0], w[1])).or_insert(0) += 1;
                }
            }
            let Some((&pair, &count)) =
                counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            else {
                break;
            };
            if count < 2 {
                break;
            }
            let id = (BASE_VOCAB + merges.len()) as u32;
            for s in &mut seqs {
                *s = apply_merge(s, pair, id);
            }
            merges.push(pair);
        }
        Self::new(DctBpeConfig {
            merges,
            ..base.config
        })
    }

    fn keep(&self, horizon: usize) -> usize {
        self.config.dct_keep.min(horizon)
    }

    /// Quantized, offset coefficients interleaved by frequency then dim.
    pub fn integer_stream(&self, chunk: &ActionChunk) -> Result<Vec<u32>> {
        if !chunk.is_finite() {
            return Err(Error::NonFinite("actions"));
        }
        let (t, d) = (chunk.horizon, chunk.action_dim);
        let keep = self.keep(t);
        let coefs: Vec<Vec<f64>> = (0..d)
            .map(|j| dct_forward(&(0..t).map(|i| chunk.get(i, j)).collect::<Vec<_>>()))
            .collect();
        let mut out = Vec::with_capacity(keep * d);
        for k in 0..keep {
            for c in &coefs {
                let q = (c[k] * self.config.quant_scale).round() as i64;
                out.push((q.clamp(-OFFSET, OFFSET - 1) + OFFSET) as u32);
            }
        }
        Ok(out)
    }

    /// Inverse of [`integer_stream`](Self::integer_stream) with zero-padding
    /// or truncation to the required length.
    pub fn from_integer_stream(&self, stream: &[u32], shape: &ChunkShape) -> Result<ActionChunk> {
        let (t, d) = (shape.horizon, shape.action_dim);
        let keep = self.keep(t);
        let mut coefs = vec![vec![0.0; t]; d];
        for k in 0..keep {
            for (j, c) in coefs.iter_mut().enumerate() {
                let sym = stream.get(k * d + j).copied().unwrap_or(OFFSET as u32);
                c[k] = (i64::from(sym) - OFFSET) as f64 / self.config.quant_scale;
            }
        }
        let signals: Vec<Vec<f64>> = coefs.iter().map(|c| dct_inverse(c)).collect();
        let values = (0..t)
            .flat_map(|i| signals.iter().map(move |s| s[i]))
            .collect();
        ActionChunk::new(values, t, d, shape.control_hz, shape.embodiment_index)
    }

    /// Applies merges in rank order.
    pub fn merge_stream(&self, stream: &[u32]) -> Vec<u32> {
        let mut s = stream.to_vec();
        for (i, &pair) in self.config.merges.iter().enumerate() {
            if s.len() < 2 {
                break;
            }
            s = apply_merge(&s, pair, (BASE_VOCAB + i) as u32);
        }
        s
    }

    pub fn expand_stream(&self, tokens: &[u32]) -> Result<Vec<u32>> {
        let vocab = self.vocab_size();
        let mut out = Vec::with_capacity(tokens.len() * 2);
        let mut stack: Vec<u32> = tokens.iter().rev().copied().collect();
        while let Some(sym) = stack.pop() {
            if sym as usize >= vocab {
                return Err(Error::TokenOutOfRange { token: sym, vocab });
            }
            if (sym as usize) < BASE_VOCAB {
                out.push(sym);
            } else {
                let (a, b) = self.config.merges[sym as usize - BASE_VOCAB];
                stack.push(b);
                stack.push(a);
            }
        }
        Ok(out)
    }

    pub fn merge_rank(&self, pair: (u32, u32)) -> Option<u32> {
        self.ranks.get(&pair).copied()
    }
}

fn apply_merge(s: &[u32], pair: (u32, u32), id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        if i + 1 < s.len() && (s[i], s[i + 1]) == pair {
            out.push(id);
            i += 2;
        } else {
            out.push(s[i]);
            i += 1;
        }
    }
    out
}

impl Tokenizer for DctBpeTokenizer {
    fn name(&self) -> String {
        "dct_bpe".into()
    }

    fn vocab_size(&self) -> usize {
        BASE_VOCAB + self.config.merges.len()
    }

    fn token_budget(&self, _shape: &ChunkShape) -> Option<usize> {
        None
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        Ok(TokenSequence::single(
            self.merge_stream(&self.integer_stream(chunk)?),
            chunk.embodiment_index,
        ))
    }

    fn decode(&self, tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk> {
        self.from_integer_stream(&self.expand_stream(tokens.primary())?, shape)
    }
}
