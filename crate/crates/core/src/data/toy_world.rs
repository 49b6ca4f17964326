//! Exhaustively enumerable joint distributions over (V, L, A, C) where the
//! token sequence C is a tuple of small-alphabet tokens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const AXIS_V: usize = 0;
pub const AXIS_L: usize = 1;
pub const AXIS_A: usize = 2;
/// Axis of token `k` (0-based).
pub const fn axis_token(k: usize) -> usize {
    3 + k
}

const MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cardinalities {
    pub v: usize,
    pub l: usize,
    pub a: usize,
    /// One alphabet size per token of C.
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToyPreset {
    /// Dirichlet(1) over every cell.
    Random { seed: u64 },
    /// V, L uniform; A = g(V, L); C = f(A).
    Deterministic,
    /// C drawn independently of (V, L, A).
    Independent { seed: u64 },
}

/// Dense joint probability table, row-major over `[V, L, A, c_1, .., c_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub cards: Cardinalities,
    pub table: Vec<f64>,
}

impl Cardinalities {
    pub fn axes(&self) -> Vec<usize> {
        let mut axes = vec![self.v, self.l, self.a];
        axes.extend(&self.tokens);
        axes
    }

    pub fn c_size(&self) -> usize {
        self.tokens.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidConfig("C needs at least one token".into()));
        }
        let axes = self.axes();
        if let Some(&bad) = axes.iter().find(|&&c| !(2..=16).contains(&c)) {
            return Err(Error::CardinalityOutOfRange(bad));
        }
        let cells = axes.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
        match cells {
            Some(n) if n <= MAX_CELLS => Ok(()),
            _ => Err(Error::InvalidConfig(format!(
                "joint table exceeds {MAX_CELLS} cells"
            ))),
        }
    }
}

pub fn build_toy_world(cards: &Cardinalities, preset: ToyPreset) -> Result<ToyWorld> {
    cards.validate()?;
    let axes = cards.axes();
    let cells: usize = axes.iter().product();
    let table = match preset {
        ToyPreset::Random { seed } => dirichlet(cells, seed),
        ToyPreset::Deterministic => {
            let mut table = vec![0.0; cells];
            let p = 1.0 / (cards.v * cards.l) as f64;
            for v in 0..cards.v {
                for l in 0..cards.l {
                    let a = (3 * v + 5 * l + v * l) % cards.a;
                    let mut idx = vec![v, l, a];
                    idx.extend(
                        cards
                            .tokens
                            .iter()
                            .enumerate()
                            .map(|(k, &card)| (a * (k + 2) + k) % card),
                    );
                    table[flat_index(&axes, &idx)] += p;
                }
            }
            table
        }
        ToyPreset::Independent { seed } => {
            let vla = dirichlet(cards.v * cards.l * cards.a, seed);
            let c = dirichlet(cards.c_size(), seed.wrapping_add(1));
            vla.iter()
                .flat_map(|p| c.iter().map(move |q| p * q))
                .collect()
        }
    };
    let world = ToyWorld {
        cards: cards.clone(),
        table,
    };
    world.validate()?;
    Ok(world)
}

fn dirichlet(cells: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..cells).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub(crate) fn flat_index(axes: &[usize], idx: &[usize]) -> usize {
    axes.iter()
        .zip(idx)
        .fold(0, |acc, (&card, &i)| acc * card + i)
}

impl ToyWorld {
    pub fn axes(&self) -> Vec<usize> {
        self.cards.axes()
    }

    pub fn n_tokens(&self) -> usize {
        self.cards.tokens.len()
    }

    pub fn validate(&self) -> Result<()> {
        let cells: usize = self.axes().iter().product();
        if self.table.len() != cells {
            return Err(Error::Shape(format!(
                "table has {} cells, cardinalities imply {cells}",
                self.table.len()
            )));
        }
        if self.table.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Unnormalized(f64::NAN));
        }
        let total: f64 = self.table.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Unnormalized(total));
        }
        Ok(())
    }

    /// Marginal over `keep` (axis ids), returned dense in the order given.
    pub fn marginal(&self, keep: &[usize]) -> Vec<f64> {
        let axes = self.axes();
        let kept: Vec<usize> = keep.iter().map(|&a| axes[a]).collect();
        let mut out = vec![0.0; kept.iter().product()];
        let mut idx = vec![0usize; axes.len()];
        for &p in &self.table {
            if p != 0.0 {
                let sub: Vec<usize> = keep.iter().map(|&a| idx[a]).collect();
                out[flat_index(&kept, &sub)] += p;
            }
            // odometer increment
            for pos in (0..axes.len()).rev() {
                idx[pos] += 1;
                if idx[pos] < axes[pos] {
                    break;
                }
                idx[pos] = 0;
            }
        }
        out
    }
}
