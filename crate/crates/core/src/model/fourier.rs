use std::f64::consts::TAU;

use crate::{Error, Result};

/// `count` frequencies spaced geometrically from `f_min` to `f_max`.
pub fn geometric_frequencies(count: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![f_min],
        _ => (0..count)
            .map(|i| f_min * (f_max / f_min).powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Sinusoidal timestamp features, row-major `len x dim`: the first `dim / 2`
/// columns are `sin(2 pi f_i t)`, the rest `cos(2 pi f_i t)`.
pub fn fourier_time_embed(
    timestamps: &[f64],
    dim: usize,
    f_min: f64,
    f_max: f64,
) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::OddDimension(dim));
    }
    if timestamps.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("timestamps"));
    }
    Ok(embed_with_frequencies(
        timestamps,
        &geometric_frequencies(dim / 2, f_min, f_max),
    ))
}

pub fn embed_with_frequencies(timestamps: &[f64], freqs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(timestamps.len() * freqs.len() * 2);
    for &t in timestamps {
        out.extend(freqs.iter().map(|f| (TAU * f * t).sin()));
        out.extend(freqs.iter().map(|f| (TAU * f * t).cos()));
    }
    out
}
