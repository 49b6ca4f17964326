//! Residual post-training: add codebook levels to a trained single-level
//! codec and refit the decoder, keeping the encoder, the soft prompts and the
//! level-0 codebook fixed.

use candle_core::{DType, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::scalar;
use super::train::{
    diverged, kmeans_init_levels, recon_errors, record_level_inputs, sample_latent_rows, DeadCodes,
    Sampler, TrainConfig, TrainLogRow,
};
use crate::data::{ActionChunk, ChunkPool};
use crate::model::{ActionCodec, CodecConfig};
use crate::quant::perplexity;
use crate::{Error, Result};

/// Parameters that post-training must leave bit-identical.
pub fn is_frozen(name: &str) -> bool {
    name.starts_with("encoder.") || name.starts_with("prompts.") || name.starts_with("codebook0.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostTrainAudit {
    pub depth: usize,
    pub n_chunks: usize,
    pub level0_mismatches: usize,
    pub frozen_checksum_before: u64,
    pub frozen_checksum_after: u64,
    pub base_recon_l2: f64,
    pub recon_l2: f64,
}

impl PostTrainAudit {
    pub fn summary(&self) -> String {
        format!(
            "level-0 codes changed: {} of {}",
            self.level0_mismatches, self.n_chunks
        )
    }
}

#[derive(Debug, Clone)]
pub struct PostTrainOutcome {
    pub codec: ActionCodec,
    pub log: Vec<TrainLogRow>,
    pub audit: PostTrainAudit,
}

/// Mean squared reconstruction error of `codec` over `chunks`.
pub fn mean_recon_l2(codec: &ActionCodec, chunks: &[&ActionChunk]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for_each_group(chunks, |part| {
        let rec = codec.reconstruct(part)?;
        for (a, b) in part.iter().zip(&rec) {
            sum += a
                .actions
                .iter()
                .zip(&b.actions)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
            count += a.actions.len();
        }
        Ok(())
    })?;
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Calls `f` on batches of equally shaped chunks, in input order per shape.
pub(crate) fn for_each_group<'a>(
    chunks: &[&'a ActionChunk],
    mut f: impl FnMut(&[&'a ActionChunk]) -> Result<()>,
) -> Result<()> {
    let mut keys: Vec<(usize, usize, usize)> = Vec::new();
    for c in chunks {
        let k = (c.embodiment_index, c.horizon, c.action_dim);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for k in keys {
        let group: Vec<&ActionChunk> = chunks
            .iter()
            .copied()
            .filter(|c| (c.embodiment_index, c.horizon, c.action_dim) == k)
            .collect();
        for part in group.chunks(256) {
            f(part)?;
        }
    }
    Ok(())
}

/// Builds a depth-`depth` codec from `base`, fits the residual levels and
/// refits the decoder on `pool`. `audit` chunks are used for the level-0
/// agreement check and the reconstruction comparison.
pub fn rvq_posttrain(
    base: &ActionCodec,
    pool: &ChunkPool,
    depth: usize,
    config: &TrainConfig,
    audit: &[&ActionChunk],
    seed: u64,
) -> Result<PostTrainOutcome> {
    if depth < 2 {
        return Err(Error::PostTrainDepth(depth));
    }
    config.validate()?;
    let cfg = CodecConfig {
        levels: depth,
        ..base.config.clone()
    };
    let mut codec = ActionCodec::new(cfg, base.registry.clone(), base.dtype(), seed)?;
    // every base parameter carries over; the decoder is warm-started
    codec.params.copy_from(&base.params, |_| true)?;
    let frozen_before = base.params.checksum_filtered(is_frozen)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7276_7121);
    let rows = sample_latent_rows(&codec, pool, config.kmeans_samples, &mut rng)?;
    kmeans_init_levels(&codec, &rows, 1, config.kmeans_iters, &mut rng)?;

    let vars: Vec<Var> = codec
        .params
        .entries()
        .iter()
        .filter(|(n, _)| !is_frozen(n))
        .map(|(_, v)| v.clone())
        .collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: config.lr,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        },
    )?;
    let sampler = Sampler::new(pool, false)?;
    let steps_per_epoch = sampler.total().div_ceil(config.batch_size).max(1);
    let mut dead = DeadCodes::new(&codec);
    let trainable: Vec<bool> = (0..depth).map(|l| l > 0).collect();
    let mut level_inputs = vec![Vec::new(); depth];
    let mut usage = vec![0u64; codec.config.codebook_size];
    let mut log = Vec::new();

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
        // the frozen encoder contributes no gradient
        let z = codec.encode_tensor(&actions, &shape)?.detach();
        let q = codec.quantize(&z).map_err(|e| diverged(e, step))?;
        let e = q.cumulative.last().expect("non-empty stack");
        let a_hat = codec.decode_tensor(e, &shape)?;
        let recon = (&target - &a_hat)?.sqr()?.mean_all()?;
        let total = (&recon + &q.codebook_loss)?;
        let recon_v = scalar(&recon)?;
        let codebook_v = scalar(&q.codebook_loss)?;
        let total_v = scalar(&total)?;
        for (name, v) in [("recon", recon_v), ("codebook", codebook_v)] {
            if !v.is_finite() {
                return Err(Error::Divergence {
                    step,
                    term: name.to_string(),
                    value: v,
                });
            }
        }
        opt.backward_step(&total)?;

        let z_rows: Vec<f64> = z.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
        record_level_inputs(&codec, &z_rows, &q.codes, &mut level_inputs)?;
        for (book, codes) in codec.rvq.levels.iter_mut().zip(&q.codes) {
            book.record_usage(codes);
        }
        for &c in q.codes.last().expect("non-empty") {
            usage[c as usize] += 1;
        }
        let last = step + 1 == config.steps;
        if step % config.log_every.max(1) == 0 || last {
            let (recon_l1, recon_l2) = recon_errors(&target, &a_hat)?;
            log.push(TrainLogRow {
                step,
                lr,
                loss: total_v,
                recon: recon_v,
                codebook: codebook_v,
                commitment: 0.0,
                tcl: 0.0,
                clip: 0.0,
                infonce: 0.0,
                l1: 0.0,
                overlap_rate: None,
                codebook_perplexity: perplexity(&usage),
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
            usage.iter_mut().for_each(|u| *u = 0);
        }
    }

    let frozen_after = codec.params.checksum_filtered(is_frozen)?;
    let mut mismatches = 0;
    for_each_group(audit, |part| {
        let before = base.tokenize(part)?;
        let after = codec.tokenize(part)?;
        mismatches += before
            .iter()
            .zip(&after)
            .filter(|(b, a)| b.levels[0] != a.levels[0])
            .count();
        Ok(())
    })?;
    let audit_report = PostTrainAudit {
        depth,
        n_chunks: audit.len(),
        level0_mismatches: mismatches,
        frozen_checksum_before: frozen_before,
        frozen_checksum_after: frozen_after,
        base_recon_l2: mean_recon_l2(base, audit)?,
        recon_l2: mean_recon_l2(&codec, audit)?,
    };
    Ok(PostTrainOutcome {
        codec,
        log,
        audit: audit_report,
    })
}
