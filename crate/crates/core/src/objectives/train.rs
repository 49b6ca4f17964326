//! The tokenizer training loop.

use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::losses::{clip_loss, flatten_latents, infonce, l1_penalty, mean_pool, scalar, tcl_loss};
use crate::data::{ActionChunk, ChunkPool};
use crate::metrics::overlap::overlap_rate;
use crate::model::{ActionCodec, CodecConfig};
use crate::params::ParamStore;
use crate::quant::{kmeans, perplexity};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub vq: f64,
    pub tcl: f64,
    pub clip: f64,
    pub l1: f64,
    pub infonce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            vq: 1.0,
            tcl: 0.1,
            clip: 0.1,
            l1: 1e-4,
            infonce: 0.0,
        }
    }
}

fn default_batch_size() -> usize {
    256
}
fn default_lr() -> f64 {
    2e-4
}
fn default_min_lr_ratio() -> f64 {
    0.1
}
fn default_sigma() -> f64 {
    0.05
}
fn default_infonce_temperature() -> f64 {
    0.1
}
fn default_log_every() -> usize {
    10
}
fn default_or_every() -> usize {
    100
}
fn default_val_pairs() -> usize {
    256
}
fn default_kmeans_samples() -> usize {
    1024
}
fn default_kmeans_iters() -> usize {
    256
}
fn default_dead_code_epochs() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub warmup_steps: usize,
    /// Final learning rate of the cosine decay, as a fraction of `lr`.
    #[serde(default = "default_min_lr_ratio")]
    pub min_lr_ratio: f64,
    #[serde(default)]
    pub weights: LossWeights,
    /// Noise scale of the InfoNCE positives, in normalized units.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_infonce_temperature")]
    pub infonce_temperature: f64,
    /// Average the time-contrastive term over every in-batch negative instead
    /// of one sampled negative per anchor.
    #[serde(default)]
    pub tcl_all_negatives: bool,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_or_every")]
    pub or_every: usize,
    #[serde(default = "default_val_pairs")]
    pub val_pairs: usize,
    #[serde(default = "default_kmeans_samples")]
    pub kmeans_samples: usize,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
    #[serde(default = "default_dead_code_epochs")]
    pub dead_code_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: default_batch_size(),
            lr: default_lr(),
            warmup_steps: 0,
            min_lr_ratio: default_min_lr_ratio(),
            weights: LossWeights::default(),
            sigma: default_sigma(),
            infonce_temperature: default_infonce_temperature(),
            tcl_all_negatives: false,
            log_every: default_log_every(),
            or_every: default_or_every(),
            val_pairs: default_val_pairs(),
            kmeans_samples: default_kmeans_samples(),
            kmeans_iters: default_kmeans_iters(),
            dead_code_epochs: default_dead_code_epochs(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let finite = [
            w.vq,
            w.tcl,
            w.clip,
            w.l1,
            w.infonce,
            self.lr,
            self.sigma,
            self.infonce_temperature,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "loss weights, lr, sigma and temperature must be finite and >= 0".into(),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if self.infonce_temperature == 0.0 {
            return Err(Error::InvalidConfig(
                "infonce_temperature must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Linear warmup, then cosine decay to `min_lr_ratio * lr`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1);
        let progress = (step - self.warmup_steps) as f64 / span as f64;
        let floor = self.lr * self.min_lr_ratio;
        floor + 0.5 * (self.lr - floor) * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub recon: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub tcl: f64,
    pub clip: f64,
    pub infonce: f64,
    pub l1: f64,
    pub overlap_rate: Option<f64>,
    pub codebook_perplexity: f64,
    pub recon_l1: f64,
    pub recon_l2: f64,
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub codec: ActionCodec,
    /// Language table and contrastive scalars, trained alongside the codec.
    pub aux: ParamStore,
    pub log: Vec<TrainLogRow>,
}

/// Per-step batch: indices into one embodiment group.
pub(crate) struct Batch {
    pub group: usize,
    pub items: Vec<usize>,
}

pub(crate) struct Sampler {
    /// Candidate items per group.
    candidates: Vec<Vec<usize>>,
    total: usize,
}

impl Sampler {
    pub fn new(pool: &ChunkPool, need_successor: bool) -> Result<Self> {
        let candidates: Vec<Vec<usize>> = pool
            .groups
            .iter()
            .map(|g| {
                (0..g.items.len())
                    .filter(|&i| !need_successor || g.items[i].successor.is_some())
                    .collect()
            })
            .collect();
        let total = candidates.iter().map(Vec::len).sum();
        if total == 0 {
            return Err(if need_successor {
                Error::MissingAdjacency
            } else {
                Error::NoData
            });
        }
        Ok(Self { candidates, total })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// A group chosen with probability proportional to its size, then up to
    /// `batch_size` distinct items from it.
    pub fn draw(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Batch {
        let mut pick = rng.random_range(0..self.total);
        let mut group = 0;
        for (g, c) in self.candidates.iter().enumerate() {
            if pick < c.len() {
                group = g;
                break;
            }
            pick -= c.len();
        }
        let cands = &self.candidates[group];
        let items = sample(rng, cands.len(), batch_size.min(cands.len()))
            .into_iter()
            .map(|i| cands[i])
            .collect();
        Batch { group, items }
    }
}

/// Latent rows `(rows, d)` of up to `max_chunks` chunks spread over the pool.
pub(crate) fn sample_latent_rows(
    codec: &ActionCodec,
    pool: &ChunkPool,
    max_chunks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let total = pool.len();
    let take = max_chunks.min(total).max(1);
    let mut picked = sample(rng, total, take).into_vec();
    picked.sort_unstable();
    let mut rows = Vec::new();
    let mut offset = 0;
    for g in &pool.groups {
        let local: Vec<&ActionChunk> = picked
            .iter()
            .filter(|&&i| i >= offset && i < offset + g.items.len())
            .map(|&i| &g.items[i - offset].chunk)
            .collect();
        offset += g.items.len();
        for part in local.chunks(256) {
            let z = codec.encode_latents(part)?.detach();
            rows.extend(z.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?);
        }
    }
    Ok(rows)
}

/// Fits levels `from..` of the codec's stack by k-means on the residuals of
/// `rows` after the levels before them.
pub(crate) fn kmeans_init_levels(
    codec: &ActionCodec,
    rows: &[f64],
    from: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let d = codec.latent_dim();
    let mut residual = rows.to_vec();
    for (level, book) in codec.rvq.levels.iter().enumerate() {
        let entries = if level >= from {
            let cents = kmeans(&residual, d, book.size(), iters, rng);
            let t = Tensor::from_vec(cents.clone(), (book.size(), d), &Device::Cpu)?;
            codec.params.assign(book.param_name(), &t)?;
            cents
        } else {
            book.entries_f64()?
        };
        let codes = crate::quant::nearest_codes(&residual, &entries, d);
        for (i, &c) in codes.iter().enumerate() {
            for j in 0..d {
                residual[i * d + j] -= entries[c as usize * d + j];
            }
        }
    }
    Ok(())
}

/// Dead-code bookkeeping for one codebook level.
pub(crate) struct DeadCodes {
    idle: Vec<Vec<usize>>,
    pub reseeded: usize,
}

impl DeadCodes {
    pub fn new(codec: &ActionCodec) -> Self {
        Self {
            idle: codec.rvq.levels.iter().map(|b| vec![0; b.size()]).collect(),
            reseeded: 0,
        }
    }

    /// Called at the end of an epoch. Codes idle for `patience` epochs on a
    /// trainable level are moved to random rows of that level's last input.
    pub fn end_epoch(
        &mut self,
        codec: &mut ActionCodec,
        level_inputs: &[Vec<f64>],
        trainable: &[bool],
        patience: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let d = codec.latent_dim();
        for (level, book) in codec.rvq.levels.iter_mut().enumerate() {
            let idle = &mut self.idle[level];
            let mut stale = Vec::new();
            for (c, &u) in book.usage().iter().enumerate() {
                if u == 0 {
                    idle[c] += 1;
                    if patience > 0 && idle[c] >= patience {
                        stale.push(c);
                    }
                } else {
                    idle[c] = 0;
                }
            }
            book.reset_usage();
            let inputs = &level_inputs[level];
            if !trainable[level] || stale.is_empty() || inputs.is_empty() {
                continue;
            }
            let n_rows = inputs.len() / d;
            let mut entries = book.entries_f64()?;
            for &c in &stale {
                let r = rng.random_range(0..n_rows);
                entries[c * d..(c + 1) * d].copy_from_slice(&inputs[r * d..(r + 1) * d]);
                idle[c] = 0;
            }
            self.reseeded += stale.len();
            let t = Tensor::from_vec(entries, (book.size(), d), &Device::Cpu)?;
            codec.params.assign(book.param_name(), &t)?;
        }
        Ok(())
    }
}

/// Non-finite latents during training are a divergence, not bad input.
pub(crate) fn diverged(err: Error, step: usize) -> Error {
    match err {
        Error::NonFinite(what) => Error::Divergence {
            step,
            term: what.to_string(),
            value: f64::NAN,
        },
        other => other,
    }
}

fn check_finite(step: usize, terms: &[(&str, f64)]) -> Result<()> {
    for (name, v) in terms {
        if !v.is_finite() {
            return Err(Error::Divergence {
                step,
                term: (*name).to_string(),
                value: *v,
            });
        }
    }
    Ok(())
}

pub(crate) fn recon_errors(a: &Tensor, a_hat: &Tensor) -> Result<(f64, f64)> {
    let diff = (a - a_hat)?.detach();
    Ok((
        scalar(&diff.abs()?.mean_all()?)?,
        scalar(&diff.sqr()?.mean_all()?)?,
    ))
}

/// Adjacent pairs used for the periodic OR measurement.
pub(crate) fn validation_pairs(
    pool: &ChunkPool,
    max_pairs: usize,
) -> Vec<(&ActionChunk, &ActionChunk)> {
    let all = pool.adjacent_pairs();
    let every = all.len().div_ceil(max_pairs.max(1)).max(1);
    all.into_iter().step_by(every).collect()
}

/// Builds a codec from `codec_config` with `seed` and trains it on `pool`.
pub fn train_tokenizer(
    pool: &ChunkPool,
    codec_config: CodecConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let registry =
        crate::data::EmbodimentRegistry::new(pool.groups.iter().map(|g| g.spec.clone()).collect())?;
    let codec = ActionCodec::new(codec_config, registry, DType::F32, seed)?;
    train_codec(codec, pool, config, seed)
}

/// Trains every parameter of `codec` on `pool`.
pub fn train_codec(
    mut codec: ActionCodec,
    pool: &ChunkPool,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::NoData);
    }
    let w = config.weights.clone();
    let dtype = codec.dtype();
    let d = codec.latent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_696e);

    let mut aux = ParamStore::new(dtype);
    let lang = aux.normal(
        "language.table",
        &[pool.n_languages.max(1), d],
        1.0 / (d as f64).sqrt(),
        &mut rng,
    )?;
    let clip_t = aux.constant("clip.t", &[], 10.0)?;
    let clip_b = aux.constant("clip.b", &[], 10.0)?;

    if config.steps == 0 {
        return Ok(TrainOutcome {
            codec,
            aux,
            log: Vec::new(),
        });
    }

    let sampler = Sampler::new(pool, w.tcl > 0.0)?;
    let rows = sample_latent_rows(&codec, pool, config.kmeans_samples, &mut rng)?;
    kmeans_init_levels(&codec, &rows, 0, config.kmeans_iters, &mut rng)?;

    let mut vars: Vec<Var> = codec.params.vars();
    if w.clip > 0.0 {
        vars.extend(aux.vars());
    }
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: config.lr,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        },
    )?;
    let val = validation_pairs(pool, config.val_pairs);
    let steps_per_epoch = sampler.total().div_ceil(config.batch_size).max(1);
    let mut dead = DeadCodes::new(&codec);
    let trainable = vec![true; codec.depth()];
    let mut level_inputs = vec![Vec::new(); codec.depth()];
    let mut epoch_usage = vec![0u64; codec.config.codebook_size];
    let mut log = Vec::new();
    let noise = Normal::new(0.0, config.sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");

    for step in 0..config.steps {
        let lr = config.learning_rate(step);
        opt.set_learning_rate(lr);
        let batch = sampler.draw(config.batch_size, &mut rng);
        let group = &pool.groups[batch.group];
        let chunks: Vec<&ActionChunk> =
            batch.items.iter().map(|&i| &group.items[i].chunk).collect();
        let shape = chunks[0].shape();
        let actions = codec.batch_actions(&chunks)?;
        let target = actions.narrow(2, 0, shape.action_dim)?;
        let z = codec.encode_tensor(&actions, &shape)?;
        let q = codec.quantize(&z).map_err(|e| diverged(e, step))?;
        let a_hat = codec.decode_tensor(&q.straight_through, &shape)?;
        let recon = (&target - &a_hat)?.sqr()?.mean_all()?;
        let commitment = q
            .commitment_loss
            .affine(codec.config.commitment_weight, 0.0)?;
        let mut total = ((&recon + &q.codebook_loss)? + &commitment)?.affine(w.vq, 0.0)?;

        let b = chunks.len();
        let mut tcl_v = 0.0;
        if w.tcl > 0.0 && b >= 2 {
            let succ: Vec<&ActionChunk> = batch
                .items
                .iter()
                .map(|&i| {
                    &group.items[group.items[i].successor.expect("sampled with successor")].chunk
                })
                .collect();
            let zp = codec.encode_latents(&succ)?;
            let pooled = mean_pool(&z)?;
            let neg_idx: Vec<u32> = if config.tcl_all_negatives {
                (0..b)
                    .flat_map(|i| (0..b).filter(move |&j| j != i).map(|j| j as u32))
                    .collect()
            } else {
                (0..b)
                    .map(|i| {
                        let j = rng.random_range(0..b - 1);
                        (if j >= i { j + 1 } else { j }) as u32
                    })
                    .collect()
            };
            let k = neg_idx.len() / b;
            let idx = Tensor::from_vec(neg_idx, b * k, &Device::Cpu)?;
            let negs = pooled.index_select(&idx, 0)?.reshape((b, k, d))?;
            let l = tcl_loss(&pooled, &mean_pool(&zp)?, &negs)?;
            tcl_v = scalar(&l)?;
            total = (total + l.affine(w.tcl, 0.0)?)?;
        }
        let mut clip_v = 0.0;
        if w.clip > 0.0 {
            let ids: Vec<usize> = batch
                .items
                .iter()
                .map(|&i| group.items[i].language_id)
                .collect();
            let l = clip_loss(&mean_pool(&z)?, &lang, &ids, &clip_t, &clip_b)?;
            clip_v = scalar(&l)?;
            total = (total + l.affine(w.clip, 0.0)?)?;
        }
        let mut infonce_v = 0.0;
        if w.infonce > 0.0 && b >= 2 {
            let mut eta = vec![0.0f64; b * shape.horizon * shape.action_dim];
            if config.sigma > 0.0 {
                eta.iter_mut().for_each(|v| *v = noise.sample(&mut rng));
            }
            let eta = Tensor::from_vec(eta, (b, shape.horizon, shape.action_dim), &Device::Cpu)?
                .to_dtype(dtype)?;
            let zp = codec.encode_tensor(&(&target + eta)?, &shape)?;
            let l = infonce(
                &flatten_latents(&z)?,
                &flatten_latents(&zp)?,
                config.infonce_temperature,
            )?;
            infonce_v = scalar(&l)?;
            total = (total + l.affine(w.infonce, 0.0)?)?;
        }
        let l1 = l1_penalty(&z)?;
        let l1_v = scalar(&l1)?;
        if w.l1 > 0.0 {
            total = (total + l1.affine(w.l1, 0.0)?)?;
        }

        let recon_v = scalar(&recon)?;
        let codebook_v = scalar(&q.codebook_loss)?;
        let commit_v = scalar(&commitment)?;
        let total_v = scalar(&total)?;
        check_finite(
            step,
            &[
                ("recon", recon_v),
                ("codebook", codebook_v),
                ("commitment", commit_v),
                ("tcl", tcl_v),
                ("clip", clip_v),
                ("infonce", infonce_v),
                ("l1", l1_v),
                ("total", total_v),
            ],
        )?;
        opt.backward_step(&total)?;

        // usage and the inputs each level saw, for dead-code reseeding
        let z_rows: Vec<f64> = z.detach().flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
        record_level_inputs(&codec, &z_rows, &q.codes, &mut level_inputs)?;
        for (book, codes) in codec.rvq.levels.iter_mut().zip(&q.codes) {
            book.record_usage(codes);
        }
        for &c in &q.codes[0] {
            epoch_usage[c as usize] += 1;
        }

        let last = step + 1 == config.steps;
        if step % config.log_every.max(1) == 0 || last {
            let (recon_l1, recon_l2) = recon_errors(&target, &a_hat)?;
            let overlap = if config.or_every > 0
                && (step % config.or_every == 0 || last)
                && !val.is_empty()
            {
                Some(overlap_rate(&codec, &val)?.overlap_rate)
            } else {
                None
            };
            log.push(TrainLogRow {
                step,
                lr,
                loss: total_v,
                recon: recon_v,
                codebook: codebook_v,
                commitment: commit_v,
                tcl: tcl_v,
                clip: clip_v,
                infonce: infonce_v,
                l1: l1_v,
                overlap_rate: overlap,
                codebook_perplexity: perplexity(&epoch_usage),
                recon_l1,
                recon_l2,
            });
        }
        if (step + 1) % steps_per_epoch == 0 {
            dead.end_epoch(
                &mut codec,
                &level_inputs,
                &trainable,
                config.dead_code_epochs,
                &mut rng,
            )?;
            epoch_usage.iter_mut().for_each(|u| *u = 0);
        }
    }
    Ok(TrainOutcome { codec, aux, log })
}

/// Stores, for every level, the residual rows that level quantized.
pub(crate) fn record_level_inputs(
    codec: &ActionCodec,
    z_rows: &[f64],
    codes: &[Vec<u32>],
    out: &mut [Vec<f64>],
) -> Result<()> {
    let d = codec.latent_dim();
    let mut residual = z_rows.to_vec();
    for (level, book) in codec.rvq.levels.iter().enumerate() {
        out[level].clone_from(&residual);
        if level + 1 < codec.depth() {
            let entries = book.entries_f64()?;
            for (i, &c) in codes[level].iter().enumerate() {
                for j in 0..d {
                    residual[i * d + j] -= entries[c as usize * d + j];
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{compute_stats_by_embodiment, synth_dataset, SynthConfig};
    use crate::model::{PerceiverConfig, Variant};

    pub(crate) fn small_pool() -> ChunkPool {
        let cfg = SynthConfig {
            trajectories_per_task: 3,
            ..SynthConfig::default()
        };
        let data = synth_dataset(&cfg, 0).unwrap();
        let reg = cfg.registry().unwrap();
        let stats = compute_stats_by_embodiment(&data, &reg).unwrap();
        ChunkPool::build(&data, &reg, &stats, 1, None).unwrap()
    }

    pub(crate) fn small_codec_config() -> CodecConfig {
        CodecConfig {
            model: PerceiverConfig {
                latent_dim: 16,
                n_tokens: 4,
                n_layers: 1,
                n_heads: 2,
                variant: Variant::Independent,
                ff_multiplier: 2,
                fourier_dim: 8,
                fourier_min_hz: 0.5,
                fourier_max_hz: None,
                prompt_dim: 4,
            },
            codebook_size: 16,
            levels: 1,
            commitment_weight: 1.0,
        }
    }

    fn quick_config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 16,
            lr: 2e-3,
            log_every: 5,
            or_every: 10,
            val_pairs: 16,
            kmeans_samples: 64,
            kmeans_iters: 20,
            weights: LossWeights {
                infonce: 0.1,
                ..LossWeights::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let pool = small_pool();
        let fresh = {
            let reg = crate::data::EmbodimentRegistry::new(
                pool.groups.iter().map(|g| g.spec.clone()).collect(),
            )
            .unwrap();
            ActionCodec::new(small_codec_config(), reg, DType::F32, 3).unwrap()
        };
        let out = train_tokenizer(&pool, small_codec_config(), &quick_config(0), 3).unwrap();
        assert_eq!(out.codec.checksum().unwrap(), fresh.checksum().unwrap());
        assert!(out.log.is_empty());
    }

    #[test]
    fn same_seed_same_weights() {
        let pool = small_pool();
        let a = train_tokenizer(&pool, small_codec_config(), &quick_config(12), 5).unwrap();
        let b = train_tokenizer(&pool, small_codec_config(), &quick_config(12), 5).unwrap();
        assert_eq!(a.codec.checksum().unwrap(), b.codec.checksum().unwrap());
        assert_eq!(a.log, b.log);
        let last = a.log.last().unwrap();
        assert_eq!(last.step, 11);
        assert!(last.overlap_rate.is_some());
        assert!(last.tcl > 0.0 && last.clip > 0.0 && last.infonce > 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        let pool = small_pool();
        let mut cfg = quick_config(3);
        cfg.lr = 1e30;
        cfg.weights.vq = 1e30;
        let err = train_tokenizer(&pool, small_codec_config(), &cfg, 1).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn schedule_warms_up_and_decays() {
        let cfg = TrainConfig {
            steps: 100,
            warmup_steps: 10,
            lr: 1.0,
            min_lr_ratio: 0.1,
            ..TrainConfig::default()
        };
        assert!((cfg.learning_rate(0) - 0.1).abs() < 1e-12);
        assert!((cfg.learning_rate(9) - 1.0).abs() < 1e-12);
        assert!((cfg.learning_rate(10) - 1.0).abs() < 1e-12);
        assert!((cfg.learning_rate(100) - 0.1).abs() < 1e-12);
    }
}
