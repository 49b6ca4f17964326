use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Static description of one robot platform: how fast it is controlled, how
/// many action dimensions it has and which soft-prompt row it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentSpec {
    pub name: String,
    pub index: usize,
    pub control_hz: f64,
    pub action_dim: usize,
    pub chunk_duration: f64,
}

impl EmbodimentSpec {
    pub fn new(name: &str, index: usize, control_hz: f64, action_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            index,
            control_hz,
            action_dim,
            chunk_duration: 1.0,
        }
    }

    /// Steps per chunk, `round(control_hz * chunk_duration)`.
    pub fn horizon(&self) -> usize {
        (self.control_hz * self.chunk_duration).round() as usize
    }

    pub fn timestamps(&self) -> Vec<f64> {
        step_timestamps(self.horizon(), self.control_hz)
    }

    pub fn shape(&self) -> ChunkShape {
        ChunkShape {
            embodiment_index: self.index,
            horizon: self.horizon(),
            action_dim: self.action_dim,
            control_hz: self.control_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.control_hz.is_finite() && self.control_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "embodiment `{}`: control_hz must be positive",
                self.name
            )));
        }
        if !(self.chunk_duration.is_finite() && self.chunk_duration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "embodiment `{}`: chunk_duration must be positive",
                self.name
            )));
        }
        if self.action_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "embodiment `{}`: action_dim must be positive",
                self.name
            )));
        }
        if self.horizon() == 0 {
            return Err(Error::InvalidConfig(format!(
                "embodiment `{}`: control_hz * chunk_duration rounds to zero steps",
                self.name
            )));
        }
        Ok(())
    }
}

/// Timestamps `i / control_hz` for `i in 0..horizon`.
pub fn step_timestamps(horizon: usize, control_hz: f64) -> Vec<f64> {
    (0..horizon).map(|i| i as f64 / control_hz).collect()
}

/// Shape a decoder (or baseline) must produce for one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkShape {
    pub embodiment_index: usize,
    pub horizon: usize,
    pub action_dim: usize,
    pub control_hz: f64,
}

impl ChunkShape {
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn len(&self) -> usize {
        self.horizon * self.action_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The embodiment registry document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentRegistry {
    pub embodiments: Vec<EmbodimentSpec>,
}

impl EmbodimentRegistry {
    pub fn new(embodiments: Vec<EmbodimentSpec>) -> Result<Self> {
        let registry = Self { embodiments };
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embodiments.is_empty() {
            return Err(Error::InvalidConfig(
                "registry lists no embodiments".to_string(),
            ));
        }
        for (i, spec) in self.embodiments.iter().enumerate() {
            spec.validate()?;
            for other in &self.embodiments[..i] {
                if other.index == spec.index {
                    return Err(Error::InvalidConfig(format!(
                        "embodiment index {} is used twice",
                        spec.index
                    )));
                }
                if other.name == spec.name {
                    return Err(Error::InvalidConfig(format!(
                        "embodiment name `{}` is used twice",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> Result<&EmbodimentSpec> {
        self.embodiments
            .iter()
            .find(|e| e.index == index)
            .ok_or(Error::UnregisteredEmbodiment(index))
    }

    pub fn by_name(&self, name: &str) -> Result<&EmbodimentSpec> {
        self.embodiments
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownEmbodiment(name.to_string()))
    }

    /// Number of soft-prompt rows needed to cover every index.
    pub fn prompt_rows(&self) -> usize {
        self.embodiments
            .iter()
            .map(|e| e.index + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn max_action_dim(&self) -> usize {
        self.embodiments
            .iter()
            .map(|e| e.action_dim)
            .max()
            .unwrap_or(0)
    }

    pub fn max_control_hz(&self) -> f64 {
        self.embodiments
            .iter()
            .map(|e| e.control_hz)
            .fold(0.0, f64::max)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let registry: Self =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
