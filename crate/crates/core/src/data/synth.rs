//! Synthetic multi-embodiment demonstrations.
//!
//! Every task owns a smooth canonical motion (low-order polynomials plus
//! sinusoids) over a `max_action_dim`-dimensional action space. A trajectory
//! instantiates the task with a goal vector that bends the motion, renders it
//! at the control frequency of each embodiment (keeping that embodiment's
//! leading action dimensions) and adds Gaussian jitter. Observations carry the
//! goal, a task one-hot and the phase of the trajectory, so the context is
//! informative about the upcoming chunk.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::embodiment::{EmbodimentRegistry, EmbodimentSpec};
use super::trajectory::Trajectory;
use crate::{Error, Result};

/// Goal influence relative to the canonical task motion.
const GOAL_GAIN: f64 = 0.3;
const NORM_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub embodiments: Vec<EmbodimentSpec>,
    pub n_tasks: usize,
    /// Demonstrations per task; each is rendered once per embodiment.
    pub trajectories_per_task: usize,
    /// Seconds per trajectory.
    pub duration: f64,
    /// Basis motions summed per task (K).
    pub n_basis: usize,
    /// Target mean absolute action value.
    pub amplitude: f64,
    /// Standard deviation of the per-step Gaussian jitter.
    pub jitter: f64,
    pub goal_dim: usize,
    /// When set, goals are drawn from a grid with this many levels per axis.
    pub goal_levels: Option<usize>,
    pub instructions_per_task: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            embodiments: vec![
                EmbodimentSpec::new("franka", 0, 10.0, 7),
                EmbodimentSpec::new("widowx", 1, 5.0, 7),
            ],
            n_tasks: 4,
            trajectories_per_task: 16,
            duration: 4.0,
            n_basis: 4,
            amplitude: 0.5,
            jitter: 0.01,
            goal_dim: 2,
            goal_levels: None,
            instructions_per_task: 2,
        }
    }
}

impl SynthConfig {
    pub fn registry(&self) -> Result<EmbodimentRegistry> {
        EmbodimentRegistry::new(self.embodiments.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.registry()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_tasks < 2 {
            return bad("n_tasks must be at least 2");
        }
        if self.trajectories_per_task == 0 {
            return bad("trajectories_per_task must be positive");
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if self.n_basis == 0 {
            return bad("n_basis must be positive");
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return bad("amplitude must be positive");
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad("jitter must be non-negative");
        }
        if self.instructions_per_task == 0 {
            return bad("instructions_per_task must be positive");
        }
        if matches!(self.goal_levels, Some(l) if l < 2) {
            return bad("goal_levels must be at least 2");
        }
        for spec in &self.embodiments {
            if ((self.duration * spec.control_hz).round() as usize) < spec.horizon() {
                return Err(Error::InvalidConfig(format!(
                    "duration {} s is shorter than one chunk for `{}`",
                    self.duration, spec.name
                )));
            }
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        self.goal_dim + self.n_tasks + 3
    }

    pub fn n_languages(&self) -> usize {
        self.n_tasks * self.instructions_per_task
    }
}

/// Canonical motion of one task.
#[derive(Debug, Clone)]
struct TaskMotion {
    /// `[basis][dim]`
    weights: Vec<Vec<f64>>,
    phases: Vec<f64>,
    /// `[goal axis][dim]`
    goal_coupling: Vec<Vec<f64>>,
    scale: f64,
}

impl TaskMotion {
    fn sample(rng: &mut ChaCha8Rng, n_basis: usize, dim: usize, goal_dim: usize) -> Self {
        let weights = (0..n_basis)
            .map(|_| (0..dim).map(|_| gaussian(rng)).collect())
            .collect();
        let phases = (0..n_basis).map(|_| rng.random::<f64>() * TAU).collect();
        let goal_coupling = (0..goal_dim)
            .map(|_| {
                (0..dim)
                    .map(|_| gaussian(rng) / (goal_dim as f64).sqrt())
                    .collect()
            })
            .collect();
        let mut motion = Self {
            weights,
            phases,
            goal_coupling,
            scale: 1.0,
        };
        let dim_count = dim as f64;
        let mean_abs: f64 = (0..NORM_GRID)
            .map(|i| {
                let s = (i as f64 + 0.5) / NORM_GRID as f64;
                (0..dim).map(|d| motion.base(s, d).abs()).sum::<f64>() / dim_count
            })
            .sum::<f64>()
            / NORM_GRID as f64;
        motion.scale = 1.0 / mean_abs.max(1e-9);
        motion
    }

    fn basis(&self, k: usize, s: f64) -> f64 {
        let x = 2.0 * s - 1.0;
        if k % 2 == 0 {
            x.powi((k / 2 + 1) as i32)
        } else {
            (TAU * ((k / 2 + 1) as f64) * s + self.phases[k]).sin()
        }
    }

    fn base(&self, s: f64, d: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w[d] * self.basis(k, s))
            .sum::<f64>()
            * self.scale
    }

    fn value(&self, s: f64, d: usize, goal: &[f64]) -> f64 {
        let bend: f64 = goal
            .iter()
            .zip(&self.goal_coupling)
            .map(|(g, u)| g * u[d])
            .sum();
        self.base(s, d) + GOAL_GAIN * bend * s
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates the dataset. Pure function of `(config, seed)`.
pub fn synth_dataset(config: &SynthConfig, seed: u64) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let max_dim = config
        .embodiments
        .iter()
        .map(|e| e.action_dim)
        .max()
        .unwrap_or(0);
    let mut task_rng = ChaCha8Rng::seed_from_u64(seed);
    let motions: Vec<TaskMotion> = (0..config.n_tasks)
        .map(|_| TaskMotion::sample(&mut task_rng, config.n_basis, max_dim, config.goal_dim))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    let mut out = Vec::new();
    for (task_id, motion) in motions.iter().enumerate() {
        for _ in 0..config.trajectories_per_task {
            let goal: Vec<f64> = (0..config.goal_dim)
                .map(|_| match config.goal_levels {
                    Some(levels) => {
                        let l = rng.random_range(0..levels);
                        -1.0 + 2.0 * l as f64 / (levels - 1) as f64
                    }
                    None => rng.random_range(-1.0..=1.0),
                })
                .collect();
            let language_id = task_id * config.instructions_per_task
                + rng.random_range(0..config.instructions_per_task);
            for spec in &config.embodiments {
                let steps = (config.duration * spec.control_hz).round() as usize;
                let mut actions = Vec::with_capacity(steps);
                let mut observation = Vec::with_capacity(steps);
                for t in 0..steps {
                    let s = t as f64 / spec.control_hz / config.duration;
                    actions.push(
                        (0..spec.action_dim)
                            .map(|d| {
                                config.amplitude * motion.value(s, d, &goal)
                                    + config.jitter * gaussian(&mut rng)
                            })
                            .collect(),
                    );
                    let mut obs = goal.clone();
                    obs.extend((0..config.n_tasks).map(|k| f64::from(u8::from(k == task_id))));
                    obs.extend([s, (TAU * s).sin(), (TAU * s).cos()]);
                    observation.push(obs);
                }
                out.push(Trajectory {
                    embodiment: spec.name.clone(),
                    actions,
                    observation,
                    language_id,
                    task_id,
                });
            }
        }
    }
    Ok(out)
}
