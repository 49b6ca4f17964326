//! Token-injection robustness: replace one generated token with a random
//! code, let generation continue, and measure the decoded error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{PolicyDataset, PolicyExample};
use super::model::ToyPolicy;
use super::train::decoded_l1;
use crate::tokenizer::Tokenizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPoint {
    /// `None` is the unperturbed control arm.
    pub position: Option<usize>,
    pub trials: usize,
    pub mean_l1: f64,
    pub std_err: f64,
    /// Per-trial L1, in trial order.
    pub errors: Vec<f64>,
}

/// Runs `trials` generations over the first examples of `data` (cycling),
/// replacing the token at `position` with a uniform random code.
pub fn perturbation_experiment(
    policy: &ToyPolicy,
    data: &PolicyDataset,
    tokenizer: &dyn Tokenizer,
    position: Option<usize>,
    trials: usize,
    seed: u64,
) -> Result<PerturbationPoint> {
    if data.is_empty() || trials == 0 {
        return Err(Error::NoData);
    }
    if let Some(j) = position {
        if j >= policy.seq_len {
            return Err(Error::PositionOutOfRange {
                position: j,
                len: policy.seq_len,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch: Vec<&PolicyExample> = (0..trials)
        .map(|i| &data.examples[i % data.len()])
        .collect();
    let mut errors = Vec::with_capacity(trials);
    for part in batch.chunks(256) {
        let codes: Vec<u32> = part
            .iter()
            .map(|_| rng.random_range(0..policy.vocab as u32))
            .collect();
        let generated = policy.generate(part, position.map(|j| (j, codes.as_slice())))?;
        for (e, g) in part.iter().zip(generated) {
            errors.push(decoded_l1(e, g, data.n_levels, tokenizer));
        }
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = if errors.len() > 1 {
        errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(PerturbationPoint {
        position,
        trials,
        mean_l1: mean,
        std_err: (var / n).sqrt(),
        errors,
    })
}

/// The control arm followed by every injection position.
pub fn perturbation_profile(
    policy: &ToyPolicy,
    data: &PolicyDataset,
    tokenizer: &dyn Tokenizer,
    trials: usize,
    seed: u64,
) -> Result<Vec<PerturbationPoint>> {
    std::iter::once(None)
        .chain((0..policy.seq_len).map(Some))
        .enumerate()
        .map(|(i, pos)| {
            perturbation_experiment(
                policy,
                data,
                tokenizer,
                pos,
                trials,
                seed.wrapping_add(i as u64),
            )
        })
        .collect()
}

pub fn write_profile_csv(profile: &[PerturbationPoint], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["position", "trials", "mean_l1", "std_err"])?;
    for p in profile {
        w.write_record([
            p.position.map_or("none".to_string(), |j| j.to_string()),
            p.trials.to_string(),
            p.mean_l1.to_string(),
            p.std_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
