use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{PolicyDataset, PolicyExample};
use super::fallback::decode_with_fallback;
use super::model::{PolicyConfig, ToyPolicy};
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub token_accuracy: f64,
    /// L1 of the decoded greedy prediction; `None` without a tokenizer.
    pub recon_l1: Option<f64>,
    /// Teacher-forced mean NLL per token, nats.
    pub val_nll: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub points: Vec<CurvePoint>,
}

impl EfficiencyCurve {
    /// First evaluated step whose token accuracy reaches `threshold`.
    pub fn steps_to_accuracy(&self, threshold: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.token_accuracy >= threshold)
            .map(|p| p.step)
    }

    pub fn steps_to_recon(&self, threshold: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.recon_l1.is_some_and(|r| r <= threshold))
            .map(|p| p.step)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "token_accuracy", "recon_l1", "val_nll"])?;
        for p in &self.points {
            w.write_record([
                p.step.to_string(),
                p.token_accuracy.to_string(),
                p.recon_l1.map_or(String::new(), |r| r.to_string()),
                p.val_nll.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub token_accuracy: f64,
    pub nll_per_token: f64,
    /// Mean teacher-forced `-log P(C | context)` of whole sequences, nats.
    pub nll_per_sequence: f64,
}

/// Teacher-forced accuracy and NLL over `data`.
pub fn evaluate_policy(policy: &ToyPolicy, data: &PolicyDataset) -> Result<PolicyEval> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut nll = 0.0;
    let refs: Vec<&PolicyExample> = data.examples.iter().collect();
    for part in refs.chunks(256) {
        let (logp, pred) = policy.score(part)?;
        for ((e, lp), pr) in part.iter().zip(&logp).zip(&pred) {
            nll -= lp.iter().sum::<f64>();
            correct += e.tokens.iter().zip(pr).filter(|(a, b)| a == b).count();
            total += e.tokens.len();
        }
    }
    if total == 0 {
        return Err(Error::NoData);
    }
    Ok(PolicyEval {
        token_accuracy: correct as f64 / total as f64,
        nll_per_token: nll / total as f64,
        nll_per_sequence: nll / data.len() as f64,
    })
}

/// Mean per-element L1 of greedy predictions decoded through `tokenizer`.
pub fn greedy_recon_l1(
    policy: &ToyPolicy,
    data: &PolicyDataset,
    tokenizer: &dyn Tokenizer,
) -> Result<f64> {
    let refs: Vec<&PolicyExample> = data.examples.iter().collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for part in refs.chunks(256) {
        for (e, codes) in part.iter().zip(policy.generate(part, None)?) {
            sum += decoded_l1(e, codes, data.n_levels, tokenizer);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Mean absolute error of the decoded `codes` against the example's chunk.
pub(crate) fn decoded_l1(
    e: &PolicyExample,
    codes: Vec<u32>,
    n_levels: usize,
    tokenizer: &dyn Tokenizer,
) -> f64 {
    let seq = TokenSequence::unflatten(&codes, n_levels, e.embodiment_index)
        .unwrap_or_else(|_| TokenSequence::single(codes, e.embodiment_index));
    let out = decode_with_fallback(&seq, tokenizer, &e.target.shape());
    let n = e.target.actions.len().max(1) as f64;
    e.target
        .actions
        .iter()
        .zip(&out.actions)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n
}

fn is_checkpoint(step: usize, total: usize, cfg: &PolicyConfig) -> bool {
    step == total
        || cfg.checkpoints.contains(&step)
        || (cfg.eval_every > 0 && step % cfg.eval_every == 0)
}

/// Cross-entropy training of a fresh policy on `train`, evaluated on `val`
/// at the configured checkpoints (and at the last step).
pub fn train_policy(
    train: &PolicyDataset,
    val: &PolicyDataset,
    config: &PolicyConfig,
    steps: usize,
    seed: u64,
    tokenizer: Option<&dyn Tokenizer>,
) -> Result<(ToyPolicy, EfficiencyCurve)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::NoData);
    }
    if train.seq_len() != val.seq_len() || train.vocab != val.vocab {
        return Err(Error::Shape(
            "train and validation sets come from different tokenizers".into(),
        ));
    }
    let policy = ToyPolicy::new(
        config.clone(),
        train.vocab,
        train.seq_len(),
        train.obs_dim,
        train.n_languages,
        train.n_embodiments,
        seed,
    )?;
    let mut opt = AdamW::new(
        policy.params.vars(),
        ParamsAdamW {
            lr: config.lr,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706f_6c69);
    let mut curve = EfficiencyCurve::default();
    let l = train.seq_len();
    let eval = |policy: &ToyPolicy, step: usize| -> Result<CurvePoint> {
        let e = evaluate_policy(policy, val)?;
        Ok(CurvePoint {
            step,
            token_accuracy: e.token_accuracy,
            recon_l1: tokenizer
                .map(|t| greedy_recon_l1(policy, val, t))
                .transpose()?,
            val_nll: e.nll_per_token,
        })
    };
    for step in 0..steps {
        if is_checkpoint(step, steps, config) {
            curve.points.push(eval(&policy, step)?);
        }
        let batch: Vec<&PolicyExample> = (0..config.batch_size)
            .map(|_| &train.examples[rng.random_range(0..train.len())])
            .collect();
        let prefixes: Vec<Vec<u32>> = batch.iter().map(|e| e.tokens[..l - 1].to_vec()).collect();
        let logits = policy.logits(&batch, &prefixes)?;
        let targets = Tensor::from_vec(
            batch
                .iter()
                .flat_map(|e| e.tokens.iter().copied())
                .collect::<Vec<u32>>(),
            batch.len() * l,
            &Device::Cpu,
        )?;
        let loss = candle_nn::loss::cross_entropy(
            &logits.reshape((batch.len() * l, policy.vocab))?,
            &targets,
        )?;
        let v = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        if !v.is_finite() {
            return Err(Error::Divergence {
                step,
                term: "cross_entropy".into(),
                value: v,
            });
        }
        opt.backward_step(&loss)?;
    }
    curve.points.push(eval(&policy, steps)?);
    Ok((policy, curve))
}
