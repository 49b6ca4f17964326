use candle_core::Tensor;

use super::codebook::Codebook;
use crate::{Error, Result};

/// Stacked codebooks; level `l` quantizes what the levels before it left over.
#[derive(Debug, Clone)]
pub struct RvqStack {
    pub levels: Vec<Codebook>,
    pub frozen: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct RvqOutput {
    /// `codes[level][row]`
    pub codes: Vec<Vec<u32>>,
    /// Sum of the selected embeddings of levels `0..=l`, for every `l`.
    pub cumulative: Vec<Tensor>,
    /// `z + sg[cumulative_last - z]`
    pub straight_through: Tensor,
    /// Sum over levels of `mean((sg[r_l] - e_l)^2)`.
    pub codebook_loss: Tensor,
    /// Sum over levels of `mean((r_l - sg[e_l])^2)`.
    pub commitment_loss: Tensor,
}

impl RvqStack {
    pub fn new(levels: Vec<Codebook>) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::InvalidConfig("RVQ stack needs at least one level".into()))?;
        if levels.iter().any(|l| l.dim() != first.dim()) {
            return Err(Error::InvalidConfig("RVQ levels disagree on width".into()));
        }
        let frozen = vec![false; levels.len()];
        Ok(Self { levels, frozen })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn vocab_size(&self) -> usize {
        self.levels[0].size()
    }

    pub fn quantize(&self, z: &Tensor) -> Result<RvqOutput> {
        rvq_quantize(z, self)
    }

    /// Cumulative embedding for explicit codes (`codes[level][row]`), using
    /// the first `codes.len()` levels.
    pub fn embed(&self, codes: &[Vec<u32>]) -> Result<Tensor> {
        if codes.is_empty() || codes.len() > self.depth() {
            return Err(Error::Shape(format!(
                "{} code levels for a stack of depth {}",
                codes.len(),
                self.depth()
            )));
        }
        let mut acc = self.levels[0].lookup(&codes[0])?;
        for (book, level) in self.levels.iter().zip(codes).skip(1) {
            acc = (acc + book.lookup(level)?)?;
        }
        Ok(acc)
    }
}

/// Residual quantization of latent rows `z: (rows, dim)`.
pub fn rvq_quantize(z: &Tensor, stack: &RvqStack) -> Result<RvqOutput> {
    let mut residual = z.clone();
    let mut codes = Vec::with_capacity(stack.depth());
    let mut cumulative: Vec<Tensor> = Vec::with_capacity(stack.depth());
    let mut codebook_loss: Option<Tensor> = None;
    let mut commitment_loss: Option<Tensor> = None;
    for book in &stack.levels {
        let q = book.quantize(&residual)?;
        residual = (&residual - q.embeddings.detach())?;
        let cum = match cumulative.last() {
            Some(prev) => (prev + &q.embeddings)?,
            None => q.embeddings.clone(),
        };
        cumulative.push(cum);
        codes.push(q.codes);
        codebook_loss = Some(match codebook_loss {
            Some(acc) => (acc + q.codebook_loss)?,
            None => q.codebook_loss,
        });
        commitment_loss = Some(match commitment_loss {
            Some(acc) => (acc + q.commitment_loss)?,
            None => q.commitment_loss,
        });
    }
    let last = cumulative.last().expect("stack has at least one level");
    let straight_through = (z + (last - z)?.detach())?;
    Ok(RvqOutput {
        codes,
        cumulative,
        straight_through,
        codebook_loss: codebook_loss.expect("non-empty"),
        commitment_loss: commitment_loss.expect("non-empty"),
    })
}
