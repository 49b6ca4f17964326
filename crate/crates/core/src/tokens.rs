use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discrete codes for one chunk: `levels[l][k]`. Single-level tokenizers use
/// one level; variable-length baselines vary `levels[0].len()` per chunk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub levels: Vec<Vec<u32>>,
    pub embodiment_index: usize,
}

impl TokenSequence {
    pub fn single(codes: Vec<u32>, embodiment_index: usize) -> Self {
        Self {
            levels: vec![codes],
            embodiment_index,
        }
    }

    /// Level-0 codes.
    pub fn primary(&self) -> &[u32] {
        self.levels.first().map_or(&[], Vec::as_slice)
    }

    /// Tokens per level.
    pub fn len(&self) -> usize {
        self.primary().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Every code, level-major.
    pub fn total_tokens(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<u32> {
        self.levels.iter().flatten().copied().collect()
    }

    /// Inverse of [`flatten`](Self::flatten) for `n_levels` equal-length levels.
    pub fn unflatten(flat: &[u32], n_levels: usize, embodiment_index: usize) -> Result<Self> {
        if n_levels == 0 || flat.len() % n_levels != 0 {
            return Err(Error::Shape(format!(
                "{} codes do not split into {n_levels} levels",
                flat.len()
            )));
        }
        let n = flat.len() / n_levels;
        Ok(Self {
            levels: (0..n_levels)
                .map(|l| flat[l * n..(l + 1) * n].to_vec())
                .collect(),
            embodiment_index,
        })
    }

    /// `embodiment_index level_count code...` with codes row-major.
    pub fn to_line(&self) -> String {
        let mut parts = vec![
            self.embodiment_index.to_string(),
            self.n_levels().to_string(),
        ];
        parts.extend(self.flatten().iter().map(u32::to_string));
        parts.join(" ")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let bad = || Error::Shape(format!("malformed token line `{line}`"));
        let mut fields = line.split_whitespace();
        let embodiment_index = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let n_levels: usize = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let flat = fields
            .map(|f| f.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if n_levels == 0 && flat.is_empty() {
            return Ok(Self {
                levels: Vec::new(),
                embodiment_index,
            });
        }
        Self::unflatten(&flat, n_levels, embodiment_index)
    }
}

pub fn write_token_stream(path: &Path, seqs: &[TokenSequence]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in seqs {
        writeln!(w, "{}", s.to_line())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_token_stream(path: &Path) -> Result<Vec<TokenSequence>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    reader
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| TokenSequence::from_line(&l?))
        .collect()
}
