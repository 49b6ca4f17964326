//! Training losses. Every loss is mean-reduced and built from differentiable
//! tensor ops so it can be composed into one objective.

use candle_core::{DType, Device, Tensor, D};

use crate::{Error, Result};

/// `u . v / (|u| |v|)`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Rows scaled to unit L2 norm.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

/// Pairwise cosine similarities `(N, M)` between the rows of `a: (N, k)` and
/// `b: (M, k)`.
pub fn cosine_matrix(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok(l2_normalize(a)?.matmul(&l2_normalize(b)?.t()?)?)
}

/// Row-wise cosine similarity of two `(N, k)` tensors, shape `(N,)`.
pub fn cosine_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((l2_normalize(a)? * l2_normalize(b)?)?.sum(D::Minus1)?)
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let tail = x.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok((pos + tail)?)
}

/// Row-wise `log_softmax` over the last dimension.
pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `mean((A - Â)^2) + mean((sg[Z] - e)^2) + beta * mean((Z - sg[e])^2)`.
pub fn vq_loss_weighted(
    a: &Tensor,
    a_hat: &Tensor,
    z: &Tensor,
    e: &Tensor,
    beta: f64,
) -> Result<Tensor> {
    same_shape(a, a_hat)?;
    same_shape(z, e)?;
    let recon = (a - a_hat)?.sqr()?.mean_all()?;
    let codebook = (z.detach() - e)?.sqr()?.mean_all()?;
    let commit = (z - e.detach())?.sqr()?.mean_all()?;
    Ok((recon + codebook)?.add(&commit.affine(beta, 0.0)?)?)
}

pub fn vq_loss(a: &Tensor, a_hat: &Tensor, z: &Tensor, e: &Tensor) -> Result<Tensor> {
    vq_loss_weighted(a, a_hat, z, e, 1.0)
}

/// Time-contrastive loss over pooled latents. `anchors` and `positives` are
/// `(B, k)`; `negatives` is `(B, K, k)` with `K` negatives per anchor. The
/// per-anchor term `-log(e^{s+} / (e^{s+} + e^{s-}))` is averaged over the
/// negatives and then over anchors.
pub fn tcl_loss(anchors: &Tensor, positives: &Tensor, negatives: &Tensor) -> Result<Tensor> {
    same_shape(anchors, positives)?;
    let (b, k, width) = negatives.dims3()?;
    if b != anchors.dim(0)? || width != anchors.dim(1)? {
        return Err(Error::Shape(format!(
            "negatives {:?} for anchors {:?}",
            negatives.dims(),
            anchors.dims()
        )));
    }
    if k == 0 {
        return Err(Error::MissingAdjacency);
    }
    let s_pos = cosine_rows(anchors, positives)?;
    let a = l2_normalize(anchors)?.unsqueeze(1)?;
    let s_neg = (a.broadcast_mul(&l2_normalize(negatives)?))?.sum(D::Minus1)?;
    let diff = s_neg.broadcast_sub(&s_pos.unsqueeze(1)?)?;
    Ok(softplus(&diff)?.mean_all()?)
}

/// Sigmoid image-text style alignment between pooled latents `z: (B, k)` and
/// a language table `y: (J, k)`. `pairs[i]` is the language row of item `i`;
/// the pair term is `log(1 + exp(l_ij (-t z_i.y_j + b)))` with `l_ij = +1` for
/// the paired row and `-1` otherwise, averaged over the `B x J` grid. Both
/// sides are L2-normalized; `t` and `b` are scalar tensors.
pub fn clip_loss(
    z: &Tensor,
    y: &Tensor,
    pairs: &[usize],
    t: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    let (n, _) = z.dims2()?;
    let (rows, _) = y.dims2()?;
    if pairs.len() != n {
        return Err(Error::Shape(format!(
            "{} pair ids for {n} items",
            pairs.len()
        )));
    }
    if let Some(&bad) = pairs.iter().find(|&&j| j >= rows) {
        return Err(Error::MissingLanguage(bad));
    }
    let logits = cosine_matrix(z, y)?;
    let mut signs = vec![-1.0f64; n * rows];
    for (i, &j) in pairs.iter().enumerate() {
        signs[i * rows + j] = 1.0;
    }
    let signs = Tensor::from_vec(signs, (n, rows), &Device::Cpu)?.to_dtype(z.dtype())?;
    let inner = logits.broadcast_mul(&t.neg()?)?.broadcast_add(b)?;
    Ok(softplus(&(inner * signs)?)?.mean_all()?)
}

/// InfoNCE cross-entropy from a `(B, B)` similarity matrix whose diagonal
/// holds the positive pairs: `mean_i [-log softmax(s_i / tau)_i]`.
pub fn infonce_from_similarity(sim: &Tensor, temperature: f64) -> Result<Tensor> {
    let (b, b2) = sim.dims2()?;
    if b != b2 {
        return Err(Error::Shape(format!("similarity matrix is {b}x{b2}")));
    }
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let logp = log_softmax(&sim.affine(1.0 / temperature, 0.0)?)?;
    let eye = Tensor::eye(b, sim.dtype(), &Device::Cpu)?;
    Ok((logp * eye)?.sum_all()?.affine(-1.0 / b as f64, 0.0)?)
}

/// InfoNCE between anchors `(B, k)` and their perturbed positives `(B, k)`,
/// every other positive in the batch acting as a negative.
pub fn infonce(anchors: &Tensor, positives: &Tensor, temperature: f64) -> Result<Tensor> {
    same_shape(anchors, positives)?;
    infonce_from_similarity(&cosine_matrix(anchors, positives)?, temperature)
}

/// Mean absolute value.
pub fn l1_penalty(z: &Tensor) -> Result<Tensor> {
    Ok(z.abs()?.mean_all()?)
}

/// Mean over the token axis of `(B, n, d)` latents.
pub fn mean_pool(z: &Tensor) -> Result<Tensor> {
    Ok(z.mean(1)?)
}

/// `(B, n, d)` latents flattened to `(B, n * d)`.
pub fn flatten_latents(z: &Tensor) -> Result<Tensor> {
    Ok(z.flatten_from(1)?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
