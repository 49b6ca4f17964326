use candle_core::{Tensor, D};
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::Result;

/// Additive score used to mask attention entries; `exp` of it underflows to
/// exactly zero in both f32 and f64.
pub const MASKED: f64 = -1e9;

/// `y = x W^T + b`, fan-in scaled uniform init.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = ps.uniform(&format!("{name}.weight"), &[out_dim, in_dim], bound, rng)?;
        let bias = if bias {
            Some(ps.uniform(&format!("{name}.bias"), &[out_dim], bound, rng)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let (&last, lead) = dims
            .split_last()
            .ok_or(crate::Error::Shape("linear input has no dimensions".into()))?;
        let rows: usize = lead.iter().product();
        let mut out_dims = lead.to_vec();
        out_dims.push(self.weight.dim(0)?);
        let y = x
            .reshape((rows, last))?
            .matmul(&self.weight.t()?)?
            .reshape(out_dims)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

/// Layer normalization over the last dimension, built from primitive ops so
/// it is differentiable.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.constant(&format!("{name}.gamma"), &[dim], 1.0)?,
            beta: ps.constant(&format!("{name}.beta"), &[dim], 0.0)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.gamma)?
            .broadcast_add(&self.beta)?)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        dim: usize,
        multiplier: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            up: Linear::new(ps, &format!("{name}.up"), dim, dim * multiplier, true, rng)?,
            down: Linear::new(
                ps,
                &format!("{name}.down"),
                dim * multiplier,
                dim,
                true,
                rng,
            )?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu()?)
    }
}

/// Multi-head attention of `x` (queries) over `context` (keys and values).
/// Self-attention is the case `context == x`.
#[derive(Debug, Clone)]
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        dim: usize,
        context_dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            q: Linear::new(ps, &format!("{name}.q"), dim, dim, false, rng)?,
            k: Linear::new(ps, &format!("{name}.k"), context_dim, dim, false, rng)?,
            v: Linear::new(ps, &format!("{name}.v"), context_dim, dim, false, rng)?,
            o: Linear::new(ps, &format!("{name}.o"), dim, dim, true, rng)?,
            heads,
        })
    }

    /// `x: (B, Nq, dim)`, `context: (B, Nk, context_dim)`, optional additive
    /// `mask: (Nq, Nk)`.
    pub fn forward(&self, x: &Tensor, context: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, nq, dim) = x.dims3()?;
        let nk = context.dim(1)?;
        let dh = dim / self.heads;
        let split = |t: Tensor, n: usize| -> Result<Tensor> {
            Ok(t.reshape((b, n, self.heads, dh))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let q = split(self.q.forward(x)?, nq)?;
        let k = split(self.k.forward(context)?, nk)?;
        let v = split(self.v.forward(context)?, nk)?;
        let mut scores = (q.matmul(&k.t()?.contiguous()?)? / (dh as f64).sqrt())?;
        if let Some(mask) = mask {
            scores = scores.broadcast_add(mask)?;
        }
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let out = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, nq, dim))?;
        self.o.forward(&out)
    }
}

/// Lower-triangular additive mask: entry `(i, j)` is masked when `j > i`.
pub fn causal_mask(n: usize, dtype: candle_core::DType) -> Result<Tensor> {
    let values: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| if j > i { MASKED } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(values, (n, n), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use rand::SeedableRng;

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let mut ps = ParamStore::new(DType::F64);
        let ln = LayerNorm::new(&mut ps, "ln", 4).unwrap();
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0, 6.0]], &Device::Cpu).unwrap();
        let y: Vec<f64> = ln
            .forward(&x)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn causal_attention_ignores_future_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new(DType::F64);
        let att = Attention::new(&mut ps, "att", 8, 8, 2, &mut rng).unwrap();
        let x = Tensor::randn(0f64, 1.0, (1, 5, 8), &Device::Cpu).unwrap();
        let mask = causal_mask(5, DType::F64).unwrap();
        let y = att.forward(&x, &x, Some(&mask)).unwrap();
        let mut x2: Vec<f64> = x.flatten_all().unwrap().to_vec1().unwrap();
        for v in &mut x2[3 * 8..] {
            *v += 1.0;
        }
        let x2 = Tensor::from_vec(x2, (1, 5, 8), &Device::Cpu).unwrap();
        let y2 = att.forward(&x2, &x2, Some(&mask)).unwrap();
        let a: Vec<f64> = y
            .narrow(1, 0, 3)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        let b: Vec<f64> = y2
            .narrow(1, 0, 3)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        assert_eq!(a, b);
        let c: Vec<f64> = y2
            .narrow(1, 3, 2)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        let d: Vec<f64> = y
            .narrow(1, 3, 2)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        assert_ne!(c, d);
    }
}
