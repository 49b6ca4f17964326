use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::ChunkShape;
use crate::metrics::info::{entropy_of_counts, histogram};
use crate::tokenizer::{ScalarCodebookTokenizer, Tokenizer};
use crate::tokens::TokenSequence;
use crate::Error;

const S: usize = 16;

fn book() -> ScalarCodebookTokenizer {
    ScalarCodebookTokenizer::new(
        (0..S)
            .map(|i| -1.0 + 2.0 * i as f64 / (S - 1) as f64)
            .collect(),
    )
    .unwrap()
}

/// Four-token sequences; `codes(lang, rng)` picks the tokens.
fn dataset(
    n: usize,
    seed: u64,
    codes: impl Fn(usize, &mut ChaCha8Rng) -> Vec<u32>,
) -> PolicyDataset {
    let tok = book();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let lang = rng.random_range(0..4);
            let tokens = codes(lang, &mut rng);
            let shape = ChunkShape {
                embodiment_index: 0,
                horizon: 2,
                action_dim: 2,
                control_hz: 10.0,
            };
            let target = tok
                .decode(&TokenSequence::single(tokens.clone(), 0), &shape)
                .unwrap();
            PolicyExample {
                observation: vec![rng.random_range(-1.0..1.0), 0.0],
                language_id: lang,
                embodiment_index: 0,
                trajectory: i,
                tokens,
                target,
            }
        })
        .collect();
    PolicyDataset {
        examples,
        vocab: S,
        n_levels: 1,
        obs_dim: 2,
        n_languages: 4,
        n_embodiments: 1,
    }
}

fn uniform(_: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..4).map(|_| rng.random_range(0..S as u32)).collect()
}

fn cfg() -> PolicyConfig {
    PolicyConfig {
        width: 32,
        heads: 2,
        batch_size: 32,
        lr: 3e-3,
        eval_every: 50,
        checkpoints: vec![0],
        ..PolicyConfig::default()
    }
}

#[test]
fn distributions_are_normalized() {
    let data = dataset(8, 1, uniform);
    let p = ToyPolicy::new(cfg(), S, 4, 2, 4, 1, 0).unwrap();
    for e in &data.examples {
        for k in 0..4 {
            let d = p.next_token_distribution(e, &e.tokens[..k]).unwrap();
            assert_eq!(d.len(), S);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(d.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn untrained_accuracy_is_chance() {
    let data = dataset(600, 2, uniform);
    let (_, curve) = train_policy(&data, &data, &cfg(), 0, 0, None).unwrap();
    let acc = curve.points[0].token_accuracy;
    assert!(acc < 2.5 / S as f64, "{acc}");
}

#[test]
fn training_is_deterministic_and_learns() {
    // the tokens are a function of the language id
    let det = |lang: usize, _: &mut ChaCha8Rng| {
        vec![lang as u32, (lang * 3) as u32, 7, (15 - lang) as u32]
    };
    let train = dataset(200, 3, det);
    let val = dataset(64, 4, det);
    let tok = book();
    let (_, a) = train_policy(&train, &val, &cfg(), 150, 5, Some(&tok)).unwrap();
    let (_, b) = train_policy(&train, &val, &cfg(), 150, 5, Some(&tok)).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.points.iter().map(|p| p.step).collect::<Vec<_>>(),
        vec![0, 50, 100, 150]
    );
    let last = a.points.last().unwrap();
    assert!(last.token_accuracy > 0.95, "{last:?}");
    assert!(last.recon_l1.unwrap() < 0.05);
    assert!(a.steps_to_accuracy(0.9).is_some());
}

#[test]
fn nll_is_bounded_by_conditional_entropy() {
    // per-language distribution over a few sequences
    let pick = |lang: usize, rng: &mut ChaCha8Rng| {
        let r = rng.random_range(0..3usize);
        vec![(lang + r) as u32, r as u32, 1, 2]
    };
    let train = dataset(300, 6, pick);
    let val = dataset(120, 7, pick);
    let (policy, _) = train_policy(&train, &val, &cfg(), 200, 1, None).unwrap();
    let eval = evaluate_policy(&policy, &val).unwrap();
    let mut h_bits = 0.0;
    for lang in 0..4 {
        let seqs: Vec<&Vec<u32>> = val
            .examples
            .iter()
            .filter(|e| e.language_id == lang)
            .map(|e| &e.tokens)
            .collect();
        h_bits +=
            seqs.len() as f64 / val.len() as f64 * entropy_of_counts(histogram(seqs).into_values());
    }
    // the observation is noise, so language is the whole usable context
    assert!(eval.nll_per_sequence >= h_bits * std::f64::consts::LN_2 - 1e-9);
}

#[test]
fn perturbation_control_matches_baseline() {
    let data = dataset(40, 8, uniform);
    let tok = book();
    let (policy, _) = train_policy(&data, &data, &cfg(), 20, 2, None).unwrap();
    let control = perturbation_experiment(&policy, &data, &tok, None, 40, 0).unwrap();
    let base = greedy_recon_l1(&policy, &data, &tok).unwrap();
    assert!((control.mean_l1 - base).abs() < 1e-12);
    let profile = perturbation_profile(&policy, &data, &tok, 10, 0).unwrap();
    assert_eq!(profile.len(), 5);
    assert!(matches!(
        perturbation_experiment(&policy, &data, &tok, Some(4), 10, 0),
        Err(Error::PositionOutOfRange {
            position: 4,
            len: 4
        })
    ));
}
