use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::ActionChunk;
use crate::tokenizer::Tokenizer;
use crate::tokens::TokenSequence;
use crate::{Error, Result};

/// Size of the multiset intersection of `a` and `b` over the longer length.
/// Two empty sequences overlap fully.
pub fn multiset_overlap(a: &[u32], b: &[u32]) -> f64 {
    let len = a.len().max(b.len());
    if len == 0 {
        return 1.0;
    }
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &c in a {
        *counts.entry(c).or_default() += 1;
    }
    let mut shared = 0;
    for &c in b {
        if let Some(n) = counts.get_mut(&c) {
            if *n > 0 {
                *n -= 1;
                shared += 1;
            }
        }
    }
    shared as f64 / len as f64
}

/// Fraction of positions holding the same code, over the longer length.
pub fn positional_overlap(a: &[u32], b: &[u32]) -> f64 {
    let len = a.len().max(b.len());
    if len == 0 {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / len as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentOverlap {
    pub overlap_rate: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrReport {
    pub overlap_rate: f64,
    pub positional_overlap_rate: f64,
    pub n_pairs: usize,
    pub per_embodiment: BTreeMap<usize, EmbodimentOverlap>,
}

/// OR over pairs of token sequences (level 0 of multi-level sequences).
pub fn overlap_rate_tokens(pairs: &[(TokenSequence, TokenSequence)]) -> Result<OrReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut total = 0.0;
    let mut positional = 0.0;
    let mut per: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (a, b) in pairs {
        let o = multiset_overlap(a.primary(), b.primary());
        total += o;
        positional += positional_overlap(a.primary(), b.primary());
        let e = per.entry(a.embodiment_index).or_default();
        e.0 += o;
        e.1 += 1;
    }
    let n = pairs.len();
    Ok(OrReport {
        overlap_rate: total / n as f64,
        positional_overlap_rate: positional / n as f64,
        n_pairs: n,
        per_embodiment: per
            .into_iter()
            .map(|(k, (sum, count))| {
                (
                    k,
                    EmbodimentOverlap {
                        overlap_rate: sum / count as f64,
                        n_pairs: count,
                    },
                )
            })
            .collect(),
    })
}

/// Mean overlap between the tokens of temporally adjacent chunks.
pub fn overlap_rate(
    tokenizer: &dyn Tokenizer,
    pairs: &[(&ActionChunk, &ActionChunk)],
) -> Result<OrReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let firsts: Vec<&ActionChunk> = pairs.iter().map(|p| p.0).collect();
    let seconds: Vec<&ActionChunk> = pairs.iter().map(|p| p.1).collect();
    let a = tokenizer.encode_batch(&firsts)?;
    let b = tokenizer.encode_batch(&seconds)?;
    overlap_rate_tokens(&a.into_iter().zip(b).collect::<Vec<_>>())
}
