use crate::data::{ActionChunk, ChunkPool};
use crate::tokenizer::Tokenizer;
use crate::{Error, Result};

/// One training target: a context and the flattened (level-major) tokens of
/// its chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyExample {
    pub observation: Vec<f64>,
    pub language_id: usize,
    pub embodiment_index: usize,
    pub trajectory: usize,
    pub tokens: Vec<u32>,
    /// Normalized ground-truth chunk.
    pub target: ActionChunk,
}

/// Fixed-length token sequences with their contexts, all produced by one
/// tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDataset {
    pub examples: Vec<PolicyExample>,
    pub vocab: usize,
    pub n_levels: usize,
    pub obs_dim: usize,
    pub n_languages: usize,
    pub n_embodiments: usize,
}

impl PolicyDataset {
    pub fn from_pool(pool: &ChunkPool, tokenizer: &dyn Tokenizer) -> Result<Self> {
        let mut examples = Vec::with_capacity(pool.len());
        for group in &pool.groups {
            for part in group.items.chunks(256) {
                let chunks: Vec<&ActionChunk> = part.iter().map(|i| &i.chunk).collect();
                let tokens = tokenizer.encode_batch(&chunks)?;
                for (item, t) in part.iter().zip(tokens) {
                    examples.push((item, t));
                }
            }
        }
        let (first, first_tokens) = examples.first().ok_or(Error::NoData)?;
        let n_levels = first_tokens.n_levels();
        let seq_len = first_tokens.total_tokens();
        let obs_dim = first.observation.len();
        let n_embodiments = pool
            .groups
            .iter()
            .map(|g| g.spec.index + 1)
            .max()
            .unwrap_or(0);
        let examples = examples
            .into_iter()
            .map(|(item, t)| {
                if t.total_tokens() != seq_len || t.n_levels() != n_levels {
                    return Err(Error::Shape(
                        "policy data needs a fixed token budget".into(),
                    ));
                }
                if item.observation.len() != obs_dim {
                    return Err(Error::DimensionMismatch {
                        expected: obs_dim,
                        got: item.observation.len(),
                    });
                }
                Ok(PolicyExample {
                    observation: item.observation.clone(),
                    language_id: item.language_id,
                    embodiment_index: item.chunk.embodiment_index,
                    trajectory: item.trajectory,
                    tokens: t.flatten(),
                    target: item.chunk.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            examples,
            vocab: tokenizer.vocab_size(),
            n_levels,
            obs_dim,
            n_languages: pool.n_languages.max(1),
            n_embodiments,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.examples.first().map_or(0, |e| e.tokens.len())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples whose trajectory index is a multiple of `every` go to the
    /// second (validation) set.
    pub fn split_by_trajectory(&self, every: usize) -> (Self, Self) {
        let every = every.max(1);
        let (val, train): (Vec<_>, Vec<_>) = self
            .examples
            .iter()
            .cloned()
            .partition(|e| e.trajectory % every == 0);
        (self.with_examples(train), self.with_examples(val))
    }

    pub fn with_examples(&self, examples: Vec<PolicyExample>) -> Self {
        Self {
            examples,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            examples: Vec::new(),
            vocab: self.vocab,
            n_levels: self.n_levels,
            obs_dim: self.obs_dim,
            n_languages: self.n_languages,
            n_embodiments: self.n_embodiments,
        }
    }
}
