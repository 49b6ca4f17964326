//! Plug-in entropies (bits) on exact toy worlds and on token corpora.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::toy_world::{axis_token, flat_index, AXIS_A, AXIS_L, AXIS_V};
use crate::data::ToyWorld;
use crate::{Error, Result};

/// `-sum p log2 p` over the non-zero entries.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Plug-in entropy of an empirical histogram. Counts are summed in sorted
/// order, so the result does not depend on iteration order.
pub fn entropy_of_counts<I: IntoIterator<Item = usize>>(counts: I) -> f64 {
    let mut counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn histogram<T: Hash + Eq, I: IntoIterator<Item = T>>(items: I) -> HashMap<T, usize> {
    let mut h = HashMap::new();
    for x in items {
        *h.entry(x).or_insert(0) += 1;
    }
    h
}

/// `n log2 S`.
pub fn capacity_bound(n: usize, vocab: usize) -> f64 {
    n as f64 * (vocab as f64).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntropy {
    /// Plug-in entropy of whole sequences.
    pub joint: f64,
    /// Per-position plug-in entropies.
    pub per_position: Vec<f64>,
    pub sum_marginals: f64,
    pub capacity: f64,
}

/// Plug-in joint and per-position entropies of equal-length code sequences.
pub fn corpus_entropy(corpus: &[Vec<u32>], vocab: usize) -> Result<CorpusEntropy> {
    let n = corpus.first().ok_or(Error::NoData)?.len();
    if corpus.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("corpus sequences differ in length".into()));
    }
    let joint = entropy_of_counts(histogram(corpus.iter()).into_values());
    let per_position: Vec<f64> = (0..n)
        .map(|k| entropy_of_counts(histogram(corpus.iter().map(|c| c[k])).into_values()))
        .collect();
    Ok(CorpusEntropy {
        joint,
        sum_marginals: per_position.iter().sum(),
        per_position,
        capacity: capacity_bound(n, vocab),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub h_c_given_vl: f64,
    pub h_c_given_a: f64,
    pub i_c_a: f64,
    pub i_c_vl: f64,
    /// `I(c_k; V, L)` per token.
    pub alignment: Vec<f64>,
    /// `I(c_k; c_<k | V, L)` per token.
    pub residual_grammar: Vec<f64>,
    /// `I(c_k; V, L, c_<k)` per token.
    pub total_information: Vec<f64>,
    /// `H(C|V,L) - [H(C|A) + I(C;A) - I(C;V,L)]`
    pub decomposition_residual: f64,
    /// Largest `|total - (alignment + residual grammar)|` over tokens.
    pub chain_rule_residual: f64,
}

/// Entropy of the marginal over `axes` (axis ids).
fn h(world: &ToyWorld, axes: &[usize]) -> f64 {
    if axes.is_empty() {
        return 0.0;
    }
    entropy_bits(&world.marginal(axes))
}

fn token_axes(range: std::ops::Range<usize>) -> Vec<usize> {
    range.map(axis_token).collect()
}

fn union(parts: &[&[usize]]) -> Vec<usize> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Every term of the conditional-entropy decomposition and the per-token
/// chain rule, by exact summation over the table.
pub fn entropy_identities(world: &ToyWorld) -> Result<InfoReport> {
    world.validate()?;
    let n = world.n_tokens();
    let c = token_axes(0..n);
    let vl = [AXIS_V, AXIS_L];
    let a = [AXIS_A];

    let h_c = h(world, &c);
    let h_vl = h(world, &vl);
    let h_a = h(world, &a);
    let h_cvl = h(world, &union(&[&c, &vl]));
    let h_ca = h(world, &union(&[&c, &a]));

    let h_c_given_vl = h_cvl - h_vl;
    let h_c_given_a = h_ca - h_a;
    let i_c_a = h_c + h_a - h_ca;
    let i_c_vl = h_c + h_vl - h_cvl;

    let mut alignment = Vec::with_capacity(n);
    let mut residual_grammar = Vec::with_capacity(n);
    let mut total_information = Vec::with_capacity(n);
    let mut chain = 0.0f64;
    for k in 0..n {
        let ck = [axis_token(k)];
        let prev = token_axes(0..k);
        let h_k = h(world, &ck);
        let h_k_vl = h(world, &union(&[&ck, &vl]));
        let h_prev_vl = h(world, &union(&[&prev, &vl]));
        let h_all = h(world, &union(&[&ck, &prev, &vl]));
        let align = h_k + h_vl - h_k_vl;
        let grammar = h_k_vl + h_prev_vl - h_all - h_vl;
        let total = h_k + h_prev_vl - h_all;
        chain = chain.max((total - (align + grammar)).abs());
        alignment.push(align);
        residual_grammar.push(grammar);
        total_information.push(total);
    }
    Ok(InfoReport {
        decomposition_residual: h_c_given_vl - (h_c_given_a + i_c_a - i_c_vl),
        chain_rule_residual: chain,
        h_c_given_vl,
        h_c_given_a,
        i_c_a,
        i_c_vl,
        alignment,
        residual_grammar,
        total_information,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllDecomposition {
    pub nll: f64,
    pub kl: f64,
    pub conditional_entropy: f64,
    /// `nll - (kl + conditional_entropy)`
    pub residual: f64,
}

/// Expected NLL (bits) of a conditional model `model[v, l, c] = P(c | v, l)`,
/// dense row-major over `[V, L, c_1, .., c_n]`, against the world's data.
pub fn nll_decomposition(world: &ToyWorld, model: &[f64]) -> Result<NllDecomposition> {
    world.validate()?;
    let n = world.n_tokens();
    let cards = &world.cards;
    let c_size = cards.c_size();
    if model.len() != cards.v * cards.l * c_size {
        return Err(Error::Shape(format!(
            "model table has {} cells, expected {}",
            model.len(),
            cards.v * cards.l * c_size
        )));
    }
    for row in model.chunks_exact(c_size) {
        let s: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Unnormalized(s));
        }
    }
    let mut keep = vec![AXIS_V, AXIS_L];
    keep.extend(token_axes(0..n));
    let joint = world.marginal(&keep);
    let p_vl = world.marginal(&[AXIS_V, AXIS_L]);
    let mut nll = 0.0;
    let mut kl = 0.0;
    let mut cond = 0.0;
    for (vl, &pvl) in p_vl.iter().enumerate() {
        if pvl == 0.0 {
            continue;
        }
        for c in 0..c_size {
            let p = joint[vl * c_size + c];
            if p == 0.0 {
                continue;
            }
            let q = model[vl * c_size + c];
            if q == 0.0 {
                return Err(Error::SupportViolation);
            }
            let p_cond = p / pvl;
            nll -= p * q.log2();
            kl += p * (p_cond / q).log2();
            cond -= p * p_cond.log2();
        }
    }
    Ok(NllDecomposition {
        nll,
        kl,
        conditional_entropy: cond,
        residual: nll - (kl + cond),
    })
}

/// The data's own conditional `P(C | V, L)` in the layout `nll_decomposition`
/// expects; uniform over C where `(v, l)` has no mass.
pub fn data_conditional(world: &ToyWorld) -> Vec<f64> {
    let n = world.n_tokens();
    let c_size = world.cards.c_size();
    let mut keep = vec![AXIS_V, AXIS_L];
    keep.extend(token_axes(0..n));
    let joint = world.marginal(&keep);
    let mut out = vec![0.0; joint.len()];
    for (vl, row) in joint.chunks_exact(c_size).enumerate() {
        let s: f64 = row.iter().sum();
        for (c, p) in row.iter().enumerate() {
            out[vl * c_size + c] = if s > 0.0 { p / s } else { 1.0 / c_size as f64 };
        }
    }
    out
}

/// Index of token tuple `codes` within C.
pub fn c_index(world: &ToyWorld, codes: &[usize]) -> usize {
    flat_index(&world.cards.tokens, codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_toy_world, Cardinalities, ToyPreset};

    #[test]
    fn entropy_ignores_count_order() {
        let a = entropy_of_counts([7, 1, 3, 1, 9, 2]);
        let b = entropy_of_counts([1, 2, 9, 3, 1, 7]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    fn cards() -> Cardinalities {
        Cardinalities {
            v: 3,
            l: 2,
            a: 4,
            tokens: vec![3, 2, 2],
        }
    }

    #[test]
    fn identities_hold_on_random_world() {
        let w = build_toy_world(&cards(), ToyPreset::Random { seed: 7 }).unwrap();
        let r = entropy_identities(&w).unwrap();
        assert!(r.decomposition_residual.abs() < 1e-9);
        assert!(r.chain_rule_residual < 1e-9);
        assert!(r.i_c_a >= -1e-12 && r.i_c_vl >= -1e-12);
    }

    #[test]
    fn deterministic_world_has_no_ambiguity() {
        let w = build_toy_world(&cards(), ToyPreset::Deterministic).unwrap();
        let r = entropy_identities(&w).unwrap();
        assert!(r.h_c_given_vl.abs() < 1e-12);
        assert!(r.h_c_given_a.abs() < 1e-12);
    }

    #[test]
    fn nll_floor_and_uniform_model() {
        let w = build_toy_world(&cards(), ToyPreset::Random { seed: 3 }).unwrap();
        let exact = nll_decomposition(&w, &data_conditional(&w)).unwrap();
        assert!(exact.kl.abs() < 1e-12);
        assert!((exact.nll - exact.conditional_entropy).abs() < 1e-12);
        let c = w.cards.c_size();
        let uniform = vec![1.0 / c as f64; w.cards.v * w.cards.l * c];
        let u = nll_decomposition(&w, &uniform).unwrap();
        assert!((u.nll - (c as f64).log2()).abs() < 1e-12);
        assert!(u.residual.abs() < 1e-12);
    }

    #[test]
    fn support_violation_detected() {
        let w = build_toy_world(&cards(), ToyPreset::Random { seed: 3 }).unwrap();
        let c = w.cards.c_size();
        let mut model = vec![0.0; w.cards.v * w.cards.l * c];
        for row in model.chunks_exact_mut(c) {
            row[0] = 1.0;
        }
        assert!(matches!(
            nll_decomposition(&w, &model),
            Err(Error::SupportViolation)
        ));
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_bound(16, 2048), 176.0);
        assert_eq!(capacity_bound(1, 2), 1.0);
        let corpus = vec![vec![0, 1], vec![1, 0], vec![0, 0], vec![1, 1]];
        let e = corpus_entropy(&corpus, 2).unwrap();
        assert!((e.joint - 2.0).abs() < 1e-12);
        assert!((e.sum_marginals - 2.0).abs() < 1e-12);
    }
}
