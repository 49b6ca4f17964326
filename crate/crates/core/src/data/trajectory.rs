use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embodiment::{step_timestamps, ChunkShape, EmbodimentSpec};
use crate::{Error, Result};

/// One demonstration: a raw action stream plus its (toy) visual context and
/// instruction id. Serialized one record per line in the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub embodiment: String,
    /// Row-major `steps x D`.
    pub actions: Vec<Vec<f64>>,
    /// One context vector per step.
    pub observation: Vec<Vec<f64>>,
    pub language_id: usize,
    pub task_id: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, spec: &EmbodimentSpec) -> Result<()> {
        if self.actions.len() < spec.horizon() {
            return Err(Error::Shape(format!(
                "trajectory has {} steps, shorter than the chunk horizon {}",
                self.actions.len(),
                spec.horizon()
            )));
        }
        for row in &self.actions {
            if row.len() != spec.action_dim {
                return Err(Error::DimensionMismatch {
                    expected: spec.action_dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("trajectory actions"));
            }
        }
        if self.observation.len() != self.actions.len() {
            return Err(Error::Shape(format!(
                "{} observations for {} action steps",
                self.observation.len(),
                self.actions.len()
            )));
        }
        let obs_len = self.observation.first().map_or(0, Vec::len);
        if self.observation.iter().any(|o| o.len() != obs_len) {
            return Err(Error::Shape(
                "observation length varies within a trajectory".to_string(),
            ));
        }
        Ok(())
    }
}

/// A fixed-duration window of actions, `T x D` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub actions: Vec<f64>,
    pub horizon: usize,
    pub action_dim: usize,
    pub timestamps: Vec<f64>,
    pub embodiment_index: usize,
}

impl ActionChunk {
    pub fn new(
        actions: Vec<f64>,
        horizon: usize,
        action_dim: usize,
        control_hz: f64,
        embodiment_index: usize,
    ) -> Result<Self> {
        if actions.len() != horizon * action_dim {
            return Err(Error::Shape(format!(
                "{} values for a {horizon}x{action_dim} chunk",
                actions.len()
            )));
        }
        Ok(Self {
            actions,
            horizon,
            action_dim,
            timestamps: step_timestamps(horizon, control_hz),
            embodiment_index,
        })
    }

    pub fn zeros(shape: &ChunkShape) -> Self {
        Self {
            actions: vec![0.0; shape.len()],
            horizon: shape.horizon,
            action_dim: shape.action_dim,
            timestamps: step_timestamps(shape.horizon, shape.control_hz),
            embodiment_index: shape.embodiment_index,
        }
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.actions[t * self.action_dim + d]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn control_hz(&self) -> f64 {
        if self.timestamps.len() >= 2 {
            1.0 / (self.timestamps[1] - self.timestamps[0])
        } else {
            f64::NAN
        }
    }

    pub fn shape(&self) -> ChunkShape {
        ChunkShape {
            embodiment_index: self.embodiment_index,
            horizon: self.horizon,
            action_dim: self.action_dim,
            control_hz: self.control_hz(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actions.iter().all(|v| v.is_finite())
    }
}

/// A chunk plus its position in the source trajectory and the id of the chunk
/// that starts `stride` steps later.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedChunk {
    pub id: usize,
    pub offset: usize,
    pub successor: Option<usize>,
    pub chunk: ActionChunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkWarning {
    NoTemporalOverlap,
}

impl fmt::Display for ChunkWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkWarning::NoTemporalOverlap => write!(f, "no temporal overlap"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSet {
    pub chunks: Vec<LinkedChunk>,
    pub warning: Option<ChunkWarning>,
}

/// Slides a window of the embodiment's horizon over the trajectory.
pub fn chunk_trajectory(
    traj: &Trajectory,
    spec: &EmbodimentSpec,
    stride_steps: usize,
) -> Result<ChunkSet> {
    chunk_with_horizon(traj, spec, spec.horizon(), stride_steps)
}

/// Like [`chunk_trajectory`] with an explicit window length, used by
/// baselines that run on shorter horizons than the learned tokenizer.
pub fn chunk_with_horizon(
    traj: &Trajectory,
    spec: &EmbodimentSpec,
    horizon: usize,
    stride_steps: usize,
) -> Result<ChunkSet> {
    if stride_steps == 0 {
        return Err(Error::InvalidConfig("stride_steps must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be >= 1".into()));
    }
    let warning = (stride_steps >= horizon).then_some(ChunkWarning::NoTemporalOverlap);
    if traj.len() < horizon {
        return Ok(ChunkSet {
            chunks: Vec::new(),
            warning,
        });
    }
    if traj.action_dim() != spec.action_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.action_dim,
            got: traj.action_dim(),
        });
    }
    let count = (traj.len() - horizon) / stride_steps + 1;
    let chunks = (0..count)
        .map(|id| {
            let offset = id * stride_steps;
            let actions = traj.actions[offset..offset + horizon]
                .iter()
                .flatten()
                .copied()
                .collect();
            LinkedChunk {
                id,
                offset,
                successor: (id + 1 < count).then_some(id + 1),
                chunk: ActionChunk {
                    actions,
                    horizon,
                    action_dim: spec.action_dim,
                    timestamps: step_timestamps(horizon, spec.control_hz),
                    embodiment_index: spec.index,
                },
            }
        })
        .collect();
    Ok(ChunkSet { chunks, warning })
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Trajectory>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
