//! Token entropy induced by small Gaussian perturbations of an action chunk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::info::{entropy_of_counts, histogram};
use crate::data::ActionChunk;
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

/// Tokens of `m` noisy copies `A + eps`, `eps ~ N(0, sigma^2)` per element.
pub fn perturbed_tokens(
    tokenizer: &dyn Tokenizer,
    chunk: &ActionChunk,
    sigma: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>> {
    if !chunk.is_finite() {
        return Err(Error::NonFinite("actions"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) || m == 0 {
        return Err(Error::InvalidConfig(
            "artifact entropy needs sigma >= 0 and m >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma checked");
    let copies: Vec<ActionChunk> = (0..m)
        .map(|_| {
            let mut c = chunk.clone();
            if sigma > 0.0 {
                c.actions
                    .iter_mut()
                    .for_each(|v| *v += noise.sample(&mut rng));
            }
            c
        })
        .collect();
    let refs: Vec<&ActionChunk> = copies.iter().collect();
    tokenizer.encode_batch(&refs)
}

/// Sum over positions of the plug-in entropy (bits) of each position's code
/// histogram. Positions past a sequence's end count as one extra symbol.
pub fn positional_entropy(samples: &[TokenSequence]) -> f64 {
    let len = samples.iter().map(TokenSequence::len).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            entropy_of_counts(
                histogram(samples.iter().map(|s| s.primary().get(k).copied())).into_values(),
            )
        })
        .sum()
}

/// Monte-Carlo artifact entropy in bits: an independence upper bound on the
/// entropy of the token sequence under input noise.
pub fn artifact_entropy(
    tokenizer: &dyn Tokenizer,
    chunk: &ActionChunk,
    sigma: f64,
    m: usize,
    seed: u64,
) -> Result<f64> {
    Ok(positional_entropy(&perturbed_tokens(
        tokenizer, chunk, sigma, m, seed,
    )?))
}

/// Bootstrap standard error of [`positional_entropy`] over `samples`.
pub fn bootstrap_se(samples: &[TokenSequence], resamples: usize, seed: u64) -> f64 {
    let m = samples.len();
    if m == 0 || resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<TokenSequence> = (0..m)
                .map(|_| samples[rng.random_range(0..m)].clone())
                .collect();
            positional_entropy(&draw)
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    (stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}
