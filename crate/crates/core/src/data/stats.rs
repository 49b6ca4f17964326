use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embodiment::EmbodimentRegistry;
use super::trajectory::{ActionChunk, Trajectory};
use crate::{Error, Result};

/// Minimum number of action steps per embodiment before percentiles are
/// considered meaningful.
pub const MIN_STEPS: usize = 100;

pub const LOW_PERCENTILE: f64 = 0.01;
pub const HIGH_PERCENTILE: f64 = 0.99;

/// Per-dimension normalization bounds for one embodiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Stats for every embodiment, keyed by name.
pub type StatsTable = BTreeMap<String, DatasetStats>;

/// Linearly interpolated percentile of already sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// 1st/99th percentile bounds of every action dimension. All trajectories
/// must belong to the same embodiment.
pub fn compute_stats(trajectories: &[&Trajectory]) -> Result<DatasetStats> {
    let first = trajectories.first().ok_or(Error::NoData)?;
    let dim = first.action_dim();
    let steps: usize = trajectories.iter().map(|t| t.len()).sum();
    if steps == 0 || dim == 0 {
        return Err(Error::NoData);
    }
    if steps < MIN_STEPS {
        return Err(Error::InsufficientData {
            embodiment: first.embodiment.clone(),
            steps,
            required: MIN_STEPS,
        });
    }
    let mut columns = vec![Vec::with_capacity(steps); dim];
    for traj in trajectories {
        if traj.embodiment != first.embodiment {
            return Err(Error::InvalidConfig(format!(
                "stats mix embodiments `{}` and `{}`",
                first.embodiment, traj.embodiment
            )));
        }
        for row in &traj.actions {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (col, v) in columns.iter_mut().zip(row) {
                if !v.is_finite() {
                    return Err(Error::NonFinite("trajectory actions"));
                }
                col.push(*v);
            }
        }
    }
    let mut low = Vec::with_capacity(dim);
    let mut high = Vec::with_capacity(dim);
    for (d, mut col) in columns.into_iter().enumerate() {
        col.sort_by(f64::total_cmp);
        let lo = percentile_sorted(&col, LOW_PERCENTILE);
        let hi = percentile_sorted(&col, HIGH_PERCENTILE);
        if hi <= lo {
            return Err(Error::DegenerateDimension(d));
        }
        low.push(lo);
        high.push(hi);
    }
    Ok(DatasetStats { low, high })
}

/// Stats for each registered embodiment that appears in the dataset.
pub fn compute_stats_by_embodiment(
    trajectories: &[Trajectory],
    registry: &EmbodimentRegistry,
) -> Result<StatsTable> {
    if trajectories.is_empty() {
        return Err(Error::NoData);
    }
    let mut table = StatsTable::new();
    for spec in &registry.embodiments {
        let group: Vec<&Trajectory> = trajectories
            .iter()
            .filter(|t| t.embodiment == spec.name)
            .collect();
        if group.is_empty() {
            continue;
        }
        table.insert(spec.name.clone(), compute_stats(&group)?);
    }
    if let Some(t) = trajectories
        .iter()
        .find(|t| !table.contains_key(&t.embodiment))
    {
        return Err(Error::UnknownEmbodiment(t.embodiment.clone()));
    }
    Ok(table)
}

impl DatasetStats {
    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn normalize_value(&self, d: usize, v: f64) -> f64 {
        let (lo, hi) = (self.low[d], self.high[d]);
        (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn denormalize_value(&self, d: usize, v: f64) -> f64 {
        let (lo, hi) = (self.low[d], self.high[d]);
        lo + (v + 1.0) * 0.5 * (hi - lo)
    }

    /// Maps `[low, high]` onto `[-1, 1]` per dimension, clipping outside values.
    pub fn normalize(&self, chunk: &ActionChunk) -> Result<ActionChunk> {
        self.map_chunk(chunk, Self::normalize_value)
    }

    pub fn denormalize(&self, chunk: &ActionChunk) -> Result<ActionChunk> {
        self.map_chunk(chunk, Self::denormalize_value)
    }

    pub fn normalize_trajectory(&self, traj: &Trajectory) -> Result<Trajectory> {
        let mut out = traj.clone();
        for row in &mut out.actions {
            if row.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: row.len(),
                });
            }
            for (d, v) in row.iter_mut().enumerate() {
                *v = self.normalize_value(d, *v);
            }
        }
        Ok(out)
    }

    fn map_chunk(
        &self,
        chunk: &ActionChunk,
        f: impl Fn(&Self, usize, f64) -> f64,
    ) -> Result<ActionChunk> {
        if chunk.action_dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: chunk.action_dim,
            });
        }
        let mut out = chunk.clone();
        for (i, v) in out.actions.iter_mut().enumerate() {
            *v = f(self, i % chunk.action_dim, *v);
        }
        Ok(out)
    }
}

pub fn save_stats(path: &Path, table: &StatsTable) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(table)?)?;
    Ok(())
}

pub fn load_stats(path: &Path) -> Result<StatsTable> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
