//! Context encoder plus causal transformer token head.

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::PolicyExample;
use crate::model::layers::{causal_mask, Attention, FeedForward, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_layers")]
    pub head_layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Evaluate every this many steps in addition to `checkpoints`.
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
}

fn default_width() -> usize {
    64
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    4
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    64
}
fn default_checkpoints() -> Vec<usize> {
    vec![0, 500, 1000, 5000, 10000, 20000]
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            width: default_width(),
            head_layers: default_layers(),
            heads: default_heads(),
            lr: default_lr(),
            batch_size: default_batch(),
            eval_every: 0,
            checkpoints: default_checkpoints(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::InvalidConfig(
                "policy width must be a positive multiple of heads".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "policy batch_size must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig("policy lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff: FeedForward,
}

/// Autoregressive token predictor `P(c_k | context, c_<k)`.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    pub config: PolicyConfig,
    pub params: ParamStore,
    pub vocab: usize,
    pub seq_len: usize,
    obs_dim: usize,
    obs_in: Linear,
    obs_out: Linear,
    language: Tensor,
    embodiment: Tensor,
    token_embed: Tensor,
    position: Tensor,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    head: Linear,
}

impl ToyPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: PolicyConfig,
        vocab: usize,
        seq_len: usize,
        obs_dim: usize,
        n_languages: usize,
        n_embodiments: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if vocab == 0 || seq_len == 0 {
            return Err(Error::InvalidConfig(
                "policy needs a vocabulary and a sequence length".into(),
            ));
        }
        let w = config.width;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new(DType::F32);
        let obs_in = Linear::new(&mut ps, "context.in", obs_dim.max(1), w, true, &mut rng)?;
        let obs_out = Linear::new(&mut ps, "context.out", w, w, true, &mut rng)?;
        let language = ps.normal("context.language", &[n_languages.max(1), w], 0.5, &mut rng)?;
        let embodiment = ps.normal(
            "context.embodiment",
            &[n_embodiments.max(1), w],
            0.5,
            &mut rng,
        )?;
        let token_embed = ps.normal("head.tokens", &[vocab, w], 0.5, &mut rng)?;
        let position = ps.normal("head.position", &[seq_len, w], 0.1, &mut rng)?;
        let blocks = (0..config.head_layers)
            .map(|i| {
                Ok(Block {
                    ln1: LayerNorm::new(&mut ps, &format!("head.block{i}.ln1"), w)?,
                    attn: Attention::new(
                        &mut ps,
                        &format!("head.block{i}.attn"),
                        w,
                        w,
                        config.heads,
                        &mut rng,
                    )?,
                    ln2: LayerNorm::new(&mut ps, &format!("head.block{i}.ln2"), w)?,
                    ff: FeedForward::new(&mut ps, &format!("head.block{i}.ff"), w, 2, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ln_f = LayerNorm::new(&mut ps, "head.ln_f", w)?;
        let head = Linear::new(&mut ps, "head.out", w, vocab, true, &mut rng)?;
        Ok(Self {
            config,
            params: ps,
            vocab,
            seq_len,
            obs_dim: obs_dim.max(1),
            obs_in,
            obs_out,
            language,
            embodiment,
            token_embed,
            position,
            blocks,
            ln_f,
            head,
        })
    }

    fn ids(values: impl Iterator<Item = usize>) -> Result<Tensor> {
        let v: Vec<u32> = values.map(|x| x as u32).collect();
        let n = v.len();
        Ok(Tensor::from_vec(v, n, &Device::Cpu)?)
    }

    /// Context vectors `(B, w)`.
    fn context(&self, batch: &[&PolicyExample]) -> Result<Tensor> {
        let obs_dim = self.obs_dim;
        let mut obs = Vec::with_capacity(batch.len() * obs_dim);
        for e in batch {
            if e.observation.len() != obs_dim && !(obs_dim == 1 && e.observation.is_empty()) {
                return Err(Error::DimensionMismatch {
                    expected: obs_dim,
                    got: e.observation.len(),
                });
            }
            if e.observation.is_empty() {
                obs.push(0.0f32);
            } else {
                obs.extend(e.observation.iter().map(|&v| v as f32));
            }
        }
        let obs = Tensor::from_vec(obs, (batch.len(), obs_dim), &Device::Cpu)?;
        let h = self.obs_out.forward(&self.obs_in.forward(&obs)?.gelu()?)?;
        let n_lang = self.language.dim(0)?;
        let n_emb = self.embodiment.dim(0)?;
        let lang = self.language.index_select(
            &Self::ids(batch.iter().map(|e| e.language_id.min(n_lang - 1)))?,
            0,
        )?;
        let emb = self.embodiment.index_select(
            &Self::ids(batch.iter().map(|e| e.embodiment_index.min(n_emb - 1)))?,
            0,
        )?;
        Ok(((h + lang)? + emb)?)
    }

    /// Logits `(B, p + 1, S)` for next tokens given prefixes of length `p`
    /// (all prefixes in the batch share a length).
    pub fn logits(&self, batch: &[&PolicyExample], prefixes: &[Vec<u32>]) -> Result<Tensor> {
        let b = batch.len();
        let p = prefixes.first().map_or(0, Vec::len);
        if prefixes.len() != b || prefixes.iter().any(|x| x.len() != p) || p >= self.seq_len {
            return Err(Error::Shape("prefix batch does not match".into()));
        }
        let w = self.config.width;
        let ctx = self.context(batch)?.reshape((b, 1, w))?;
        let mut x = if p == 0 {
            ctx
        } else {
            let flat: Vec<u32> = prefixes.iter().flatten().copied().collect();
            if let Some(&bad) = flat.iter().find(|&&c| c as usize >= self.vocab) {
                return Err(Error::TokenOutOfRange {
                    token: bad,
                    vocab: self.vocab,
                });
            }
            let idx = Tensor::from_vec(flat, b * p, &Device::Cpu)?;
            let tok = self.token_embed.index_select(&idx, 0)?.reshape((b, p, w))?;
            Tensor::cat(&[&ctx, &tok], 1)?
        };
        x = x.broadcast_add(&self.position.narrow(0, 0, p + 1)?)?;
        let mask = causal_mask(p + 1, DType::F32)?;
        for blk in &self.blocks {
            let h = blk.ln1.forward(&x)?;
            x = (&x + blk.attn.forward(&h, &h, Some(&mask))?)?;
            x = (&x + blk.ff.forward(&blk.ln2.forward(&x)?)?)?;
        }
        self.head.forward(&self.ln_f.forward(&x)?)
    }

    /// `P(c_{p+1} | context, prefix)` for one example.
    pub fn next_token_distribution(
        &self,
        example: &PolicyExample,
        prefix: &[u32],
    ) -> Result<Vec<f64>> {
        let logits = self.logits(&[example], &[prefix.to_vec()])?;
        let last = logits.get(0)?.get(prefix.len())?;
        let probs = candle_nn::ops::softmax(&last.to_dtype(DType::F64)?, D::Minus1)?;
        Ok(probs.to_vec1()?)
    }

    /// Teacher-forced per-token log-probabilities `(B, L)` in nats and
    /// greedy predictions.
    pub fn score(&self, batch: &[&PolicyExample]) -> Result<(Vec<Vec<f64>>, Vec<Vec<u32>>)> {
        let l = self.seq_len;
        let prefixes: Vec<Vec<u32>> = batch.iter().map(|e| e.tokens[..l - 1].to_vec()).collect();
        let logits = self.logits(batch, &prefixes)?;
        let logp = candle_nn::ops::log_softmax(&logits.to_dtype(DType::F64)?, D::Minus1)?;
        let argmax: Vec<Vec<u32>> = logp.argmax(D::Minus1)?.to_vec2()?;
        let targets = Tensor::from_vec(
            batch
                .iter()
                .flat_map(|e| e.tokens.iter().copied())
                .collect::<Vec<u32>>(),
            (batch.len(), l, 1),
            &Device::Cpu,
        )?;
        let picked: Vec<Vec<f64>> = logp.gather(&targets, 2)?.squeeze(2)?.to_vec2()?;
        Ok((picked, argmax))
    }

    /// Greedy autoregressive generation. `inject = Some((j, codes))` replaces
    /// the token at position `j` of row `i` with `codes[i]` before generation
    /// continues.
    pub fn generate(
        &self,
        batch: &[&PolicyExample],
        inject: Option<(usize, &[u32])>,
    ) -> Result<Vec<Vec<u32>>> {
        if let Some((j, codes)) = inject {
            if j >= self.seq_len {
                return Err(Error::PositionOutOfRange {
                    position: j,
                    len: self.seq_len,
                });
            }
            if codes.len() != batch.len() {
                return Err(Error::Shape("one injected code per row".into()));
            }
        }
        let mut seqs: Vec<Vec<u32>> = vec![Vec::with_capacity(self.seq_len); batch.len()];
        for k in 0..self.seq_len {
            let logits = self.logits(batch, &seqs)?;
            let next: Vec<u32> = logits
                .narrow(1, k, 1)?
                .squeeze(1)?
                .argmax(D::Minus1)?
                .to_vec1()?;
            for (i, (s, c)) in seqs.iter_mut().zip(next).enumerate() {
                match inject {
                    Some((j, codes)) if j == k => s.push(codes[i]),
                    _ => s.push(c),
                }
            }
        }
        Ok(seqs)
    }
}
