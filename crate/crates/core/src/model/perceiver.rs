//! Perceiver-style encoder and decoder.
//!
//! The encoder owns `n` learnable query vectors that cross-attend to the
//! action steps of a chunk. Each key/value step is the projected action plus a
//! projected Fourier embedding of its timestamp, concatenated with the soft
//! prompt of the chunk's embodiment. The `sa` and `causal` variants add a
//! self-attention layer over the queries in every block; `independent` has no
//! query-query interaction at all, so output row `k` is a function of query
//! `k` and the actions only.
//!
//! The decoder builds one query per target timestamp from its Fourier
//! embedding concatenated with the target embodiment's prompt, and lets those
//! queries cross-attend to the (slot-embedded) token embeddings.

use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fourier::{embed_with_frequencies, geometric_frequencies};
use super::layers::{causal_mask, Attention, FeedForward, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Independent,
    Sa,
    Causal,
}

fn default_fourier_dim() -> usize {
    64
}
fn default_fourier_min_hz() -> f64 {
    0.5
}
fn default_prompt_dim() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceiverConfig {
    pub latent_dim: usize,
    pub n_tokens: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub variant: Variant,
    pub ff_multiplier: usize,
    #[serde(default = "default_fourier_dim")]
    pub fourier_dim: usize,
    #[serde(default = "default_fourier_min_hz")]
    pub fourier_min_hz: f64,
    /// Highest Fourier frequency; half the fastest registered control rate
    /// when unset.
    #[serde(default)]
    pub fourier_max_hz: Option<f64>,
    #[serde(default = "default_prompt_dim")]
    pub prompt_dim: usize,
}

impl Default for PerceiverConfig {
    fn default() -> Self {
        Self {
            latent_dim: 128,
            n_tokens: 16,
            n_layers: 2,
            n_heads: 4,
            variant: Variant::Independent,
            ff_multiplier: 4,
            fourier_dim: default_fourier_dim(),
            fourier_min_hz: default_fourier_min_hz(),
            fourier_max_hz: None,
            prompt_dim: default_prompt_dim(),
        }
    }
}

impl PerceiverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.latent_dim == 0 || self.n_tokens == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return bad("latent_dim, n_tokens, n_layers and n_heads must be positive".into());
        }
        if self.latent_dim % self.n_heads != 0 {
            return bad(format!(
                "latent_dim {} is not divisible by n_heads {}",
                self.latent_dim, self.n_heads
            ));
        }
        if self.ff_multiplier == 0 {
            return bad("ff_multiplier must be positive".into());
        }
        if self.fourier_dim == 0 || self.fourier_dim % 2 != 0 {
            return Err(Error::OddDimension(self.fourier_dim));
        }
        if self.prompt_dim == 0 {
            return bad("prompt_dim must be positive".into());
        }
        Ok(())
    }

    pub fn frequencies(&self, max_control_hz: f64) -> Vec<f64> {
        let f_max = self
            .fourier_max_hz
            .unwrap_or(max_control_hz / 2.0)
            .max(self.fourier_min_hz);
        geometric_frequencies(self.fourier_dim / 2, self.fourier_min_hz, f_max)
    }
}

/// One learnable embedding row per embodiment index, shared by encoder and
/// decoder.
#[derive(Debug, Clone)]
pub struct SoftPromptTable {
    table: Tensor,
    rows: usize,
}

impl SoftPromptTable {
    pub fn new(ps: &mut ParamStore, rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let table = ps.normal(
            "prompts.table",
            &[rows, dim],
            1.0 / (dim as f64).sqrt(),
            rng,
        )?;
        Ok(Self { table, rows })
    }

    /// `(1, dim)` row for an embodiment.
    pub fn row(&self, index: usize) -> Result<Tensor> {
        if index >= self.rows {
            return Err(Error::UnregisteredEmbodiment(index));
        }
        Ok(self.table.narrow(0, index, 1)?)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

fn time_features(timestamps: &[f64], freqs: &[f64], dtype: DType) -> Result<Tensor> {
    let values = embed_with_frequencies(timestamps, freqs);
    Ok(
        Tensor::from_vec(values, (timestamps.len(), freqs.len() * 2), &Device::Cpu)?
            .to_dtype(dtype)?,
    )
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    cross_norm: LayerNorm,
    cross: Attention,
    self_attn: Option<(LayerNorm, Attention)>,
    ff_norm: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    queries: Tensor,
    action_proj: Linear,
    time_proj: Linear,
    blocks: Vec<EncoderBlock>,
    out_norm: LayerNorm,
    out_proj: Linear,
    variant: Variant,
    freqs: Vec<f64>,
    max_action_dim: usize,
}

impl Encoder {
    pub fn new(
        ps: &mut ParamStore,
        cfg: &PerceiverConfig,
        max_action_dim: usize,
        max_control_hz: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.latent_dim;
        let queries = ps.normal(
            "encoder.queries",
            &[cfg.n_tokens, d],
            1.0 / (d as f64).sqrt(),
            rng,
        )?;
        let action_proj = Linear::new(ps, "encoder.action_proj", max_action_dim, d, true, rng)?;
        let time_proj = Linear::new(ps, "encoder.time_proj", cfg.fourier_dim, d, false, rng)?;
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = format!("encoder.block{l}");
            let cross_norm = LayerNorm::new(ps, &format!("{p}.cross_norm"), d)?;
            let cross = Attention::new(
                ps,
                &format!("{p}.cross"),
                d,
                d + cfg.prompt_dim,
                cfg.n_heads,
                rng,
            )?;
            let self_attn = match cfg.variant {
                Variant::Independent => None,
                Variant::Sa | Variant::Causal => Some((
                    LayerNorm::new(ps, &format!("{p}.self_norm"), d)?,
                    Attention::new(ps, &format!("{p}.self"), d, d, cfg.n_heads, rng)?,
                )),
            };
            let ff_norm = LayerNorm::new(ps, &format!("{p}.ff_norm"), d)?;
            let ff = FeedForward::new(ps, &format!("{p}.ff"), d, cfg.ff_multiplier, rng)?;
            blocks.push(EncoderBlock {
                cross_norm,
                cross,
                self_attn,
                ff_norm,
                ff,
            });
        }
        Ok(Self {
            queries,
            action_proj,
            time_proj,
            blocks,
            out_norm: LayerNorm::new(ps, "encoder.out_norm", d)?,
            out_proj: Linear::new(ps, "encoder.out_proj", d, d, true, rng)?,
            variant: cfg.variant,
            freqs: cfg.frequencies(max_control_hz),
            max_action_dim,
        })
    }

    pub fn max_action_dim(&self) -> usize {
        self.max_action_dim
    }

    /// `actions: (B, T, max_action_dim)` zero-padded, `prompt: (1, prompt_dim)`.
    /// Returns latents `(B, n, d)`.
    pub fn forward(&self, actions: &Tensor, timestamps: &[f64], prompt: &Tensor) -> Result<Tensor> {
        let (b, t, dim) = actions.dims3()?;
        if t != timestamps.len() {
            return Err(Error::Shape(format!(
                "{t} action steps, {} timestamps",
                timestamps.len()
            )));
        }
        if dim != self.max_action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.max_action_dim,
                got: dim,
            });
        }
        let dtype = actions.dtype();
        let time = self
            .time_proj
            .forward(&time_features(timestamps, &self.freqs, dtype)?)?;
        let steps = self.action_proj.forward(actions)?.broadcast_add(&time)?;
        let prompt_dim = prompt.dim(1)?;
        let prompt = prompt
            .reshape((1, 1, prompt_dim))?
            .broadcast_as((b, t, prompt_dim))?;
        let kv = Tensor::cat(&[&steps, &prompt], 2)?;

        let (n, d) = self.queries.dims2()?;
        let mut x = self
            .queries
            .unsqueeze(0)?
            .broadcast_as((b, n, d))?
            .contiguous()?;
        let mask = match self.variant {
            Variant::Causal => Some(causal_mask(n, dtype)?),
            _ => None,
        };
        for block in &self.blocks {
            x = (&x
                + block
                    .cross
                    .forward(&block.cross_norm.forward(&x)?, &kv, None)?)?;
            if let Some((norm, att)) = &block.self_attn {
                let h = norm.forward(&x)?;
                x = (&x + att.forward(&h, &h, mask.as_ref())?)?;
            }
            x = (&x + block.ff.forward(&block.ff_norm.forward(&x)?)?)?;
        }
        self.out_proj.forward(&self.out_norm.forward(&x)?)
    }
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    cross_norm: LayerNorm,
    cross: Attention,
    ff_norm: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    slot_embed: Tensor,
    query_proj: Linear,
    blocks: Vec<DecoderBlock>,
    out_norm: LayerNorm,
    head: Linear,
    freqs: Vec<f64>,
}

impl Decoder {
    pub fn new(
        ps: &mut ParamStore,
        cfg: &PerceiverConfig,
        max_action_dim: usize,
        max_control_hz: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.latent_dim;
        let slot_embed = ps.normal(
            "decoder.slot_embed",
            &[cfg.n_tokens, d],
            1.0 / (d as f64).sqrt(),
            rng,
        )?;
        let query_proj = Linear::new(
            ps,
            "decoder.query_proj",
            cfg.fourier_dim + cfg.prompt_dim,
            d,
            true,
            rng,
        )?;
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = format!("decoder.block{l}");
            blocks.push(DecoderBlock {
                cross_norm: LayerNorm::new(ps, &format!("{p}.cross_norm"), d)?,
                cross: Attention::new(ps, &format!("{p}.cross"), d, d, cfg.n_heads, rng)?,
                ff_norm: LayerNorm::new(ps, &format!("{p}.ff_norm"), d)?,
                ff: FeedForward::new(ps, &format!("{p}.ff"), d, cfg.ff_multiplier, rng)?,
            });
        }
        Ok(Self {
            slot_embed,
            query_proj,
            blocks,
            out_norm: LayerNorm::new(ps, "decoder.out_norm", d)?,
            head: Linear::new(ps, "decoder.head", d, max_action_dim, true, rng)?,
            freqs: cfg.frequencies(max_control_hz),
        })
    }

    /// `tokens: (B, n, d)` quantized embeddings. Returns `(B, T', action_dim)`
    /// in `[-1, 1]`.
    pub fn forward(
        &self,
        tokens: &Tensor,
        timestamps: &[f64],
        prompt: &Tensor,
        action_dim: usize,
    ) -> Result<Tensor> {
        let (b, n, d) = tokens.dims3()?;
        if n != self.slot_embed.dim(0)? {
            return Err(Error::Shape(format!(
                "decoder expects {} tokens, got {n}",
                self.slot_embed.dim(0)?
            )));
        }
        let dtype = tokens.dtype();
        let t = timestamps.len();
        let time = time_features(timestamps, &self.freqs, dtype)?;
        let prompt = prompt.broadcast_as((t, prompt.dim(1)?))?;
        let queries = self
            .query_proj
            .forward(&Tensor::cat(&[&time, &prompt], 1)?)?;
        let mut x = queries
            .unsqueeze(0)?
            .broadcast_as((b, t, d))?
            .contiguous()?;
        let kv = tokens.broadcast_add(&self.slot_embed)?;
        for block in &self.blocks {
            x = (&x
                + block
                    .cross
                    .forward(&block.cross_norm.forward(&x)?, &kv, None)?)?;
            x = (&x + block.ff.forward(&block.ff_norm.forward(&x)?)?)?;
        }
        let out = self.head.forward(&self.out_norm.forward(&x)?)?.tanh()?;
        Ok(out.narrow(2, 0, action_dim)?)
    }
}
