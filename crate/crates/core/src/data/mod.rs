//! Action datasets: embodiments, trajectories, chunking, normalization, the
//! synthetic generator and enumerable toy worlds.

pub mod embodiment;
pub mod pool;
pub mod stats;
pub mod synth;
pub mod toy_world;
pub mod trajectory;

pub use embodiment::{step_timestamps, ChunkShape, EmbodimentRegistry, EmbodimentSpec};
pub use pool::{ChunkGroup, ChunkPool, PoolItem};
pub use stats::{compute_stats, compute_stats_by_embodiment, DatasetStats, StatsTable};
pub use synth::{synth_dataset, SynthConfig};
pub use toy_world::{build_toy_world, Cardinalities, ToyPreset, ToyWorld};
pub use trajectory::{
    chunk_trajectory, chunk_with_horizon, ActionChunk, ChunkSet, ChunkWarning, LinkedChunk,
    Trajectory,
};
