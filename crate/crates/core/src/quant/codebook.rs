use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::{Error, Result};

/// Index of the nearest row of `book` for every row of `latents` (both
/// row-major with width `dim`), by squared Euclidean distance accumulated in
/// f64 in coordinate order. Ties go to the lowest index.
pub fn nearest_codes(latents: &[f64], book: &[f64], dim: usize) -> Vec<u32> {
    let size = book.len() / dim;
    latents
        .chunks_exact(dim)
        .map(|z| {
            let mut best = f64::INFINITY;
            let mut best_j = 0u32;
            'entries: for j in 0..size {
                let e = &book[j * dim..(j + 1) * dim];
                let mut dist = 0.0;
                for (a, b) in z.iter().zip(e) {
                    let diff = a - b;
                    dist += diff * diff;
                    // partial sums never decrease, so this entry cannot win
                    if dist > best {
                        continue 'entries;
                    }
                }
                if dist < best {
                    best = dist;
                    best_j = j as u32;
                }
            }
            best_j
        })
        .collect()
}

/// A learnable table of `size` code vectors plus per-code usage counters.
#[derive(Debug, Clone)]
pub struct Codebook {
    name: String,
    entries: Tensor,
    size: usize,
    dim: usize,
    usage: Vec<u64>,
}

/// Result of quantizing a batch of latent rows against one codebook.
#[derive(Debug, Clone)]
pub struct Quantized {
    pub codes: Vec<u32>,
    /// `e_c` for every row, differentiable with respect to the codebook.
    pub embeddings: Tensor,
    /// `z + sg[e_c - z]`: forward value `e_c`, identity gradient to `z`.
    pub straight_through: Tensor,
    /// `mean((sg[z] - e_c)^2)`
    pub codebook_loss: Tensor,
    /// `mean((z - sg[e_c])^2)`
    pub commitment_loss: Tensor,
}

impl Codebook {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        size: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!("codebook size {size} < 2")));
        }
        let entries = ps.normal(
            &format!("{name}.entries"),
            &[size, dim],
            1.0 / (dim as f64).sqrt(),
            rng,
        )?;
        Ok(Self {
            name: format!("{name}.entries"),
            entries,
            size,
            dim,
            usage: vec![0; size],
        })
    }

    /// A codebook with fixed entries, outside any parameter store.
    pub fn from_entries(entries: &[f64], dim: usize, dtype: DType) -> Result<Self> {
        let size = entries.len() / dim;
        if size == 0 || size * dim != entries.len() {
            return Err(Error::Shape(format!(
                "{} values for width {dim}",
                entries.len()
            )));
        }
        let t = Tensor::from_vec(entries.to_vec(), (size, dim), &Device::Cpu)?.to_dtype(dtype)?;
        Ok(Self {
            name: "fixed".into(),
            entries: t,
            size,
            dim,
            usage: vec![0; size],
        })
    }

    pub fn param_name(&self) -> &str {
        &self.name
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &Tensor {
        &self.entries
    }

    pub fn entries_f64(&self) -> Result<Vec<f64>> {
        Ok(self
            .entries
            .flatten_all()?
            .to_dtype(DType::F64)?
            .to_vec1()?)
    }

    pub fn usage(&self) -> &[u64] {
        &self.usage
    }

    pub fn record_usage(&mut self, codes: &[u32]) {
        for &c in codes {
            self.usage[c as usize] += 1;
        }
    }

    pub fn reset_usage(&mut self) {
        self.usage.iter_mut().for_each(|u| *u = 0);
    }

    /// Codes for latent rows `z: (rows, dim)`.
    pub fn codes(&self, z: &Tensor) -> Result<Vec<u32>> {
        let (_, dim) = z.dims2()?;
        if dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dim,
            });
        }
        let latents: Vec<f64> = z.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
        if latents.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latents"));
        }
        Ok(nearest_codes(&latents, &self.entries_f64()?, dim))
    }

    /// Rows `e_c` for the given codes.
    pub fn lookup(&self, codes: &[u32]) -> Result<Tensor> {
        if let Some(&bad) = codes.iter().find(|&&c| c as usize >= self.size) {
            return Err(Error::TokenOutOfRange {
                token: bad,
                vocab: self.size,
            });
        }
        let idx = Tensor::from_slice(codes, codes.len(), &Device::Cpu)?;
        Ok(self.entries.index_select(&idx, 0)?)
    }

    /// Nearest-code quantization with straight-through and VQ loss terms.
    pub fn quantize(&self, z: &Tensor) -> Result<Quantized> {
        let codes = self.codes(z)?;
        let embeddings = self.lookup(&codes)?;
        let straight_through = (z + (&embeddings - z)?.detach())?;
        let codebook_loss = (z.detach() - &embeddings)?.sqr()?.mean_all()?;
        let commitment_loss = (z - embeddings.detach())?.sqr()?.mean_all()?;
        Ok(Quantized {
            codes,
            embeddings,
            straight_through,
            codebook_loss,
            commitment_loss,
        })
    }

    /// `exp(H)` of the usage histogram, in codes.
    pub fn perplexity(&self) -> f64 {
        perplexity(&self.usage)
    }
}

pub fn perplexity(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.exp()
}
