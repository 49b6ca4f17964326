use super::embodiment::{EmbodimentRegistry, EmbodimentSpec};
use super::stats::StatsTable;
use super::trajectory::{chunk_with_horizon, ActionChunk, Trajectory};
use crate::{Error, Result};

/// A normalized chunk with its context and a link to its temporal successor
/// (an index into the same group).
#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem {
    pub chunk: ActionChunk,
    pub successor: Option<usize>,
    pub observation: Vec<f64>,
    pub language_id: usize,
    pub task_id: usize,
    pub trajectory: usize,
    pub offset: usize,
}

/// All chunks of one embodiment; every chunk in a group has the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkGroup {
    pub spec: EmbodimentSpec,
    pub items: Vec<PoolItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPool {
    pub groups: Vec<ChunkGroup>,
    pub n_languages: usize,
}

impl ChunkPool {
    /// Normalizes and chunks every trajectory. `horizon` overrides the
    /// embodiment horizon (baselines use shorter windows).
    pub fn build(
        trajectories: &[Trajectory],
        registry: &EmbodimentRegistry,
        stats: &StatsTable,
        stride: usize,
        horizon: Option<usize>,
    ) -> Result<Self> {
        Self::build_filtered(trajectories, registry, stats, stride, horizon, |_| true)
    }

    pub fn build_filtered(
        trajectories: &[Trajectory],
        registry: &EmbodimentRegistry,
        stats: &StatsTable,
        stride: usize,
        horizon: Option<usize>,
        keep: impl Fn(usize) -> bool,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::NoData);
        }
        let mut groups: Vec<ChunkGroup> = registry
            .embodiments
            .iter()
            .map(|spec| ChunkGroup {
                spec: spec.clone(),
                items: Vec::new(),
            })
            .collect();
        let mut n_languages = 0;
        for (ti, traj) in trajectories.iter().enumerate() {
            n_languages = n_languages.max(traj.language_id + 1);
            if !keep(ti) {
                continue;
            }
            let gi = registry
                .embodiments
                .iter()
                .position(|e| e.name == traj.embodiment)
                .ok_or_else(|| Error::UnknownEmbodiment(traj.embodiment.clone()))?;
            let spec = &registry.embodiments[gi];
            traj.validate(spec)?;
            let st = stats
                .get(&spec.name)
                .ok_or_else(|| Error::UnknownEmbodiment(spec.name.clone()))?;
            let normalized = st.normalize_trajectory(traj)?;
            let set = chunk_with_horizon(
                &normalized,
                spec,
                horizon.unwrap_or_else(|| spec.horizon()),
                stride,
            )?;
            let group = &mut groups[gi];
            let base = group.items.len();
            for linked in set.chunks {
                group.items.push(PoolItem {
                    observation: traj.observation[linked.offset].clone(),
                    language_id: traj.language_id,
                    task_id: traj.task_id,
                    trajectory: ti,
                    offset: linked.offset,
                    successor: linked.successor.map(|s| base + s),
                    chunk: linked.chunk,
                });
            }
        }
        groups.retain(|g| !g.items.is_empty());
        if groups.is_empty() {
            return Err(Error::NoData);
        }
        Ok(Self {
            groups,
            n_languages,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chunks(&self) -> impl Iterator<Item = &ActionChunk> {
        self.groups
            .iter()
            .flat_map(|g| g.items.iter().map(|i| &i.chunk))
    }

    pub fn items(&self) -> impl Iterator<Item = &PoolItem> {
        self.groups.iter().flat_map(|g| g.items.iter())
    }

    /// Every (chunk, successor) pair.
    pub fn adjacent_pairs(&self) -> Vec<(&ActionChunk, &ActionChunk)> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.items
                    .iter()
                    .filter_map(|i| i.successor.map(|s| (&i.chunk, &g.items[s].chunk)))
            })
            .collect()
    }

    /// Keeps every `every`-th adjacent pair, for cheap periodic evaluation.
    pub fn adjacent_pairs_strided(&self, every: usize) -> Vec<(&ActionChunk, &ActionChunk)> {
        self.adjacent_pairs()
            .into_iter()
            .step_by(every.max(1))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stats::compute_stats_by_embodiment;
    use crate::data::synth::{synth_dataset, SynthConfig};

    #[test]
    fn successors_point_to_next_offset() {
        let cfg = SynthConfig {
            trajectories_per_task: 2,
            ..SynthConfig::default()
        };
        let data = synth_dataset(&cfg, 0).unwrap();
        let reg = cfg.registry().unwrap();
        let stats = compute_stats_by_embodiment(&data, &reg).unwrap();
        let pool = ChunkPool::build(&data, &reg, &stats, 1, None).unwrap();
        assert_eq!(pool.groups.len(), 2);
        for g in &pool.groups {
            for item in &g.items {
                assert!(item.chunk.actions.iter().all(|v| (-1.0..=1.0).contains(v)));
                if let Some(s) = item.successor {
                    let next = &g.items[s];
                    assert_eq!(next.trajectory, item.trajectory);
                    assert_eq!(next.offset, item.offset + 1);
                }
            }
        }
        assert_eq!(pool.n_languages, cfg.n_languages());
        assert!(!pool.adjacent_pairs().is_empty());
    }
}
