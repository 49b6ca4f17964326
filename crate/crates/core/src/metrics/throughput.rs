//! Latency and throughput of a tokenizer behind a stub autoregressive policy.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::ActionChunk;
use crate::tokenizer::Tokenizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub tokenizer: String,
    pub horizon: usize,
    pub trials: usize,
    /// Mean seconds per chunk: measured encode/decode plus simulated generation.
    pub latency_s: f64,
    pub actions_per_s: f64,
    pub budget_mean: f64,
    pub budget_std: f64,
    /// Measured encode+decode seconds per chunk.
    pub codec_s: f64,
}

impl ThroughputReport {
    pub fn budget_label(&self) -> String {
        format!("{:.1}±{:.1}", self.budget_mean, self.budget_std)
    }
}

/// Runs `trials` chunks (cycling through `chunks`) through encode, a stub
/// generator that costs `token_delay` per emitted token, and decode.
/// The delay is accounted, not slept.
pub fn throughput_latency(
    tokenizer: &dyn Tokenizer,
    chunks: &[&ActionChunk],
    trials: usize,
    token_delay: Duration,
) -> Result<ThroughputReport> {
    if trials < 10 {
        return Err(Error::InvalidConfig(format!(
            "throughput needs at least 10 trials, got {trials}"
        )));
    }
    let first = chunks.first().ok_or(Error::NoData)?;
    let horizon = first.horizon;
    let mut budgets = Vec::with_capacity(trials);
    let mut codec = Duration::ZERO;
    for i in 0..trials {
        let chunk = chunks[i % chunks.len()];
        let start = Instant::now();
        let tokens = tokenizer.encode(chunk)?;
        tokenizer.decode(&tokens, &chunk.shape())?;
        codec += start.elapsed();
        budgets.push(tokens.total_tokens() as f64);
    }
    let n = trials as f64;
    let budget_mean = budgets.iter().sum::<f64>() / n;
    let budget_std = (budgets
        .iter()
        .map(|b| (b - budget_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let codec_s = codec.as_secs_f64() / n;
    let latency_s = codec_s + budget_mean * token_delay.as_secs_f64();
    Ok(ThroughputReport {
        tokenizer: tokenizer.name(),
        horizon,
        trials,
        latency_s,
        actions_per_s: if latency_s > 0.0 {
            horizon as f64 / latency_s
        } else {
            f64::INFINITY
        },
        budget_mean,
        budget_std,
        codec_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::ScalarCodebookTokenizer;

    #[test]
    fn budget_and_delay_scaling() {
        let tok = ScalarCodebookTokenizer::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let c = ActionChunk::new(vec![0.1; 56], 8, 7, 10.0, 0).unwrap();
        let slow = throughput_latency(&tok, &[&c], 20, Duration::from_millis(10)).unwrap();
        assert_eq!(slow.budget_label(), "56.0±0.0");
        let fast = throughput_latency(&tok, &[&c], 20, Duration::from_millis(5)).unwrap();
        let ratio = fast.actions_per_s / slow.actions_per_s;
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
        assert!(throughput_latency(&tok, &[&c], 9, Duration::ZERO).is_err());
    }
}
