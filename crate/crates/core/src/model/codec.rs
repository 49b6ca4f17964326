//! The learned tokenizer: Perceiver encoder, (residual) VQ bottleneck and
//! Perceiver decoder, conditioned on per-embodiment soft prompts.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::perceiver::{Decoder, Encoder, PerceiverConfig, SoftPromptTable};
use crate::data::{step_timestamps, ActionChunk, ChunkShape, EmbodimentRegistry};
use crate::params::{read_manifest, ParamStore};
use crate::quant::{Codebook, RvqOutput, RvqStack};
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

fn default_levels() -> usize {
    1
}
fn default_commitment_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub model: PerceiverConfig,
    /// Vocabulary size `S` of every codebook level.
    pub codebook_size: usize,
    /// Residual depth; 1 is plain VQ.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Weight on the commitment term of the VQ objective.
    #[serde(default = "default_commitment_weight")]
    pub commitment_weight: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            model: PerceiverConfig::default(),
            codebook_size: 2048,
            levels: default_levels(),
            commitment_weight: default_commitment_weight(),
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.codebook_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "codebook_size {} < 2",
                self.codebook_size
            )));
        }
        if self.levels == 0 {
            return Err(Error::InvalidConfig("levels must be at least 1".into()));
        }
        if !self.commitment_weight.is_finite() || self.commitment_weight < 0.0 {
            return Err(Error::InvalidConfig(
                "commitment_weight must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointConfig {
    codec: CodecConfig,
    registry: EmbodimentRegistry,
}

#[derive(Debug, Clone)]
pub struct ActionCodec {
    pub config: CodecConfig,
    pub registry: EmbodimentRegistry,
    pub params: ParamStore,
    pub prompts: SoftPromptTable,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub rvq: RvqStack,
}

impl ActionCodec {
    pub fn new(
        config: CodecConfig,
        registry: EmbodimentRegistry,
        dtype: DType,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        registry.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new(dtype);
        let dmax = registry.max_action_dim();
        let hz = registry.max_control_hz();
        let m = &config.model;
        let prompts =
            SoftPromptTable::new(&mut params, registry.prompt_rows(), m.prompt_dim, &mut rng)?;
        let encoder = Encoder::new(&mut params, m, dmax, hz, &mut rng)?;
        let decoder = Decoder::new(&mut params, m, dmax, hz, &mut rng)?;
        let levels = (0..config.levels)
            .map(|l| {
                Codebook::new(
                    &mut params,
                    &format!("codebook{l}"),
                    config.codebook_size,
                    m.latent_dim,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let rvq = RvqStack::new(levels)?;
        Ok(Self {
            config,
            registry,
            params,
            prompts,
            encoder,
            decoder,
            rvq,
        })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn n_tokens(&self) -> usize {
        self.config.model.n_tokens
    }

    pub fn latent_dim(&self) -> usize {
        self.config.model.latent_dim
    }

    pub fn depth(&self) -> usize {
        self.rvq.depth()
    }

    /// Stacks equally shaped chunks into `(B, T, max_action_dim)`, zero-padding
    /// the action dimension.
    pub fn batch_actions(&self, chunks: &[&ActionChunk]) -> Result<Tensor> {
        let first = chunks.first().ok_or(Error::NoData)?;
        let (t, d) = (first.horizon, first.action_dim);
        let dmax = self.encoder.max_action_dim();
        if d > dmax {
            return Err(Error::DimensionMismatch {
                expected: dmax,
                got: d,
            });
        }
        let mut values = vec![0.0; chunks.len() * t * dmax];
        for (b, c) in chunks.iter().enumerate() {
            if c.horizon != t || c.action_dim != d || c.embodiment_index != first.embodiment_index {
                return Err(Error::Shape(
                    "chunks in a batch must share embodiment and shape".into(),
                ));
            }
            for s in 0..t {
                let dst = (b * t + s) * dmax;
                values[dst..dst + d].copy_from_slice(c.row(s));
            }
        }
        Ok(
            Tensor::from_vec(values, (chunks.len(), t, dmax), &Device::Cpu)?
                .to_dtype(self.dtype())?,
        )
    }

    /// Latents `(B, n, d)` for actions `(B, T, D)` of one embodiment; `D` may
    /// be the embodiment's width or the padded width.
    pub fn encode_tensor(&self, actions: &Tensor, shape: &ChunkShape) -> Result<Tensor> {
        self.registry.get(shape.embodiment_index)?;
        let prompt = self.prompts.row(shape.embodiment_index)?;
        let (_, _, d) = actions.dims3()?;
        let dmax = self.encoder.max_action_dim();
        let actions = if d < dmax {
            actions.pad_with_zeros(2, 0, dmax - d)?
        } else {
            actions.clone()
        };
        self.encoder.forward(
            &actions,
            &step_timestamps(shape.horizon, shape.control_hz),
            &prompt,
        )
    }

    pub fn encode_latents(&self, chunks: &[&ActionChunk]) -> Result<Tensor> {
        let actions = self.batch_actions(chunks)?;
        self.encode_tensor(&actions, &chunks[0].shape())
    }

    /// Residual quantization of `(B, n, d)` latents; codes are indexed
    /// `[level][b * n + k]`.
    pub fn quantize(&self, z: &Tensor) -> Result<RvqOutput> {
        let (b, n, d) = z.dims3()?;
        let mut out = self.rvq.quantize(&z.reshape((b * n, d))?)?;
        out.cumulative = out
            .cumulative
            .iter()
            .map(|c| c.reshape((b, n, d)))
            .collect::<candle_core::Result<_>>()?;
        out.straight_through = out.straight_through.reshape((b, n, d))?;
        Ok(out)
    }

    /// Decodes `(B, n, d)` token embeddings into `(B, T', D')` for `shape`.
    pub fn decode_tensor(&self, embeddings: &Tensor, shape: &ChunkShape) -> Result<Tensor> {
        let spec = self.registry.get(shape.embodiment_index)?;
        if shape.action_dim != spec.action_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.action_dim,
                got: shape.action_dim,
            });
        }
        let prompt = self.prompts.row(shape.embodiment_index)?;
        self.decoder.forward(
            embeddings,
            &step_timestamps(shape.horizon, shape.control_hz),
            &prompt,
            shape.action_dim,
        )
    }

    /// Token sequences for a batch of equally shaped chunks, every level.
    pub fn tokenize(&self, chunks: &[&ActionChunk]) -> Result<Vec<TokenSequence>> {
        let z = self.encode_latents(chunks)?;
        let out = self.quantize(&z)?;
        Ok(split_codes(
            &out.codes,
            chunks.len(),
            self.n_tokens(),
            chunks[0].embodiment_index,
        ))
    }

    /// Embeddings `(B, n, d)` for token sequences, using as many levels as
    /// each sequence carries (all must agree).
    pub fn embed_tokens(&self, tokens: &[&TokenSequence]) -> Result<Tensor> {
        let first = tokens.first().ok_or(Error::NoData)?;
        let n = self.n_tokens();
        let levels = first.n_levels();
        let mut codes = vec![Vec::with_capacity(tokens.len() * n); levels];
        for t in tokens {
            if t.n_levels() != levels || t.levels.iter().any(|l| l.len() != n) {
                return Err(Error::Shape(format!(
                    "expected {levels} levels of {n} tokens, got {:?}",
                    t.levels.iter().map(Vec::len).collect::<Vec<_>>()
                )));
            }
            for (dst, src) in codes.iter_mut().zip(&t.levels) {
                dst.extend_from_slice(src);
            }
        }
        Ok(self
            .rvq
            .embed(&codes)?
            .reshape((tokens.len(), n, self.latent_dim()))?)
    }

    pub fn detokenize(
        &self,
        tokens: &[&TokenSequence],
        shape: &ChunkShape,
    ) -> Result<Vec<ActionChunk>> {
        let e = self.embed_tokens(tokens)?;
        let out = self.decode_tensor(&e, shape)?;
        tensor_to_chunks(&out, shape)
    }

    /// Encode, quantize with all levels and decode back to the same shape.
    pub fn reconstruct(&self, chunks: &[&ActionChunk]) -> Result<Vec<ActionChunk>> {
        let z = self.encode_latents(chunks)?;
        let out = self.quantize(&z)?;
        let shape = chunks[0].shape();
        let last = out.cumulative.last().expect("non-empty stack");
        tensor_to_chunks(&self.decode_tensor(last, &shape)?, &shape)
    }

    pub fn checksum(&self) -> Result<u64> {
        self.params.checksum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let extra = serde_json::to_value(CheckpointConfig {
            codec: self.config.clone(),
            registry: self.registry.clone(),
        })?;
        self.params.save(path, extra)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest = read_manifest(path)?;
        let cfg: CheckpointConfig = serde_json::from_value(manifest.config)
            .map_err(|e| Error::Checkpoint(format!("checkpoint config: {e}")))?;
        let codec = Self::new(cfg.codec, cfg.registry, DType::F32, 0)?;
        codec.params.load_values(path)?;
        Ok(codec)
    }
}

pub(crate) fn split_codes(
    codes: &[Vec<u32>],
    batch: usize,
    n: usize,
    embodiment_index: usize,
) -> Vec<TokenSequence> {
    (0..batch)
        .map(|b| TokenSequence {
            levels: codes
                .iter()
                .map(|l| l[b * n..(b + 1) * n].to_vec())
                .collect(),
            embodiment_index,
        })
        .collect()
}

/// `(B, T, D)` tensor into chunks of `shape`.
pub fn tensor_to_chunks(t: &Tensor, shape: &ChunkShape) -> Result<Vec<ActionChunk>> {
    let (b, horizon, d) = t.dims3()?;
    if horizon != shape.horizon || d != shape.action_dim {
        return Err(Error::Shape(format!(
            "tensor is {horizon}x{d}, shape is {}x{}",
            shape.horizon, shape.action_dim
        )));
    }
    let values: Vec<f64> = t.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
    values
        .chunks_exact(horizon * d)
        .take(b)
        .map(|v| {
            ActionChunk::new(
                v.to_vec(),
                horizon,
                d,
                shape.control_hz,
                shape.embodiment_index,
            )
        })
        .collect()
}

impl Tokenizer for ActionCodec {
    fn name(&self) -> String {
        if self.depth() > 1 {
            format!("actioncodec-rvq{}", self.depth())
        } else {
            "actioncodec".into()
        }
    }

    fn vocab_size(&self) -> usize {
        self.config.codebook_size
    }

    fn token_budget(&self, _shape: &ChunkShape) -> Option<usize> {
        Some(self.n_tokens() * self.depth())
    }

    fn encode(&self, chunk: &ActionChunk) -> Result<TokenSequence> {
        Ok(self.tokenize(&[chunk])?.remove(0))
    }

    fn encode_batch(&self, chunks: &[&ActionChunk]) -> Result<Vec<TokenSequence>> {
        // batches are formed per (embodiment, horizon) group
        let mut out: Vec<Option<TokenSequence>> = vec![None; chunks.len()];
        let mut groups: Vec<(ChunkKey, Vec<usize>)> = Vec::new();
        for (i, c) in chunks.iter().enumerate() {
            let key = (c.embodiment_index, c.horizon, c.action_dim);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, idx)) => idx.push(i),
                None => groups.push((key, vec![i])),
            }
        }
        for (_, idx) in groups {
            for part in idx.chunks(256) {
                let batch: Vec<&ActionChunk> = part.iter().map(|&i| chunks[i]).collect();
                for (&i, t) in part.iter().zip(self.tokenize(&batch)?) {
                    out[i] = Some(t);
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|t| t.expect("every chunk tokenized"))
            .collect())
    }

    fn decode(&self, tokens: &TokenSequence, shape: &ChunkShape) -> Result<ActionChunk> {
        Ok(self.detokenize(&[tokens], shape)?.remove(0))
    }
}

type ChunkKey = (usize, usize, usize);
