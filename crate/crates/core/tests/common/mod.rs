#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weam::corpus::{TokenizedPair, CLS, MASK, NUM_RESERVED, SEP};
use weam::exchange::{build_exchange_matrix, AlignmentSet};
use weam::model::{ModelConfig, ModelParams};
use weam::training::{batch_loss, Corruption, MaskedEntry, MaskedInput};

/// |V|=20, h=16, one layer, two heads, m_max=12. The wider init keeps every
/// attention gradient well above finite-difference round-off.
pub fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        hidden: 16,
        layers: 1,
        heads: 2,
        ff_mult: 4,
        m_max: 12,
        init_std: 0.3,
        identity_heads: false,
        seed,
    }
}

/// A random pair with a one-to-one alignment and three masked positions, at
/// least one of which is aligned.
pub fn toy_entry(config: &ModelConfig, rng: &mut ChaCha8Rng) -> MaskedEntry {
    let n_src = rng.random_range(3..=4);
    let n_tgt = rng.random_range(3..=4);
    let mut ids = vec![CLS];
    let word =
        |rng: &mut ChaCha8Rng| rng.random_range(NUM_RESERVED as u32..config.vocab_size as u32);
    ids.extend((0..n_src).map(|_| word(rng)));
    ids.push(SEP);
    ids.extend((0..n_tgt).map(|_| word(rng)));
    ids.push(SEP);
    let source_span = 1..1 + n_src;
    let target_span = n_src + 2..n_src + 2 + n_tgt;
    let tok = TokenizedPair {
        ids,
        source_span: source_span.clone(),
        target_span: target_span.clone(),
        pad_len: 0,
    }
    .padded_to(config.m_max)
    .unwrap();

    let mut src: Vec<usize> = source_span.collect();
    let mut tgt: Vec<usize> = target_span.collect();
    src.shuffle(rng);
    tgt.shuffle(rng);
    let pairs: Vec<(usize, usize)> = src
        .iter()
        .copied()
        .zip(tgt.iter().copied())
        .take(2)
        .collect();
    let a = build_exchange_matrix(&AlignmentSet::new(pairs.clone()).unwrap(), tok.len()).unwrap();

    let mut positions: Vec<usize> = tok.word_positions().filter(|&p| p != pairs[0].0).collect();
    positions.shuffle(rng);
    let mut chosen = vec![pairs[0].0];
    chosen.extend(positions.into_iter().take(2));
    chosen.sort_unstable();

    let mut input = tok.clone();
    let mut labels = Vec::new();
    let mut corruptions = Vec::new();
    for (k, &pos) in chosen.iter().enumerate() {
        labels.push((pos, tok.ids[pos]));
        if k == 2 {
            corruptions.push(Corruption::Keep);
        } else {
            input.ids[pos] = MASK;
            corruptions.push(Corruption::Mask);
        }
    }
    MaskedEntry {
        masked: MaskedInput {
            input,
            labels,
            corruptions,
        },
        exchange: a,
    }
}

pub fn toy_batch(config: &ModelConfig, seed: u64, size: usize) -> Vec<MaskedEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| toy_entry(config, &mut rng)).collect()
}

fn perturb(params: &mut ModelParams, tensor: usize, index: usize, delta: f64) {
    let mut tensors = params.tensors_mut();
    tensors[tensor].1.as_slice_mut().expect("contiguous")[index] += delta;
}

/// Central finite differences of the batch loss for every parameter, in
/// `tensors()` order.
pub fn finite_difference_gradients(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[MaskedEntry],
    lambda: f64,
    eps: f64,
) -> Vec<(String, Vec<f64>)> {
    let mut work = params.clone();
    let shapes: Vec<(String, usize)> = params
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let loss = |p: &ModelParams| batch_loss(batch, p, config, lambda).unwrap().total;
    shapes
        .into_iter()
        .enumerate()
        .map(|(t, (name, len))| {
            let grads = (0..len)
                .map(|i| {
                    perturb(&mut work, t, i, eps);
                    let plus = loss(&work);
                    perturb(&mut work, t, i, -2.0 * eps);
                    let minus = loss(&work);
                    perturb(&mut work, t, i, eps);
                    (plus - minus) / (2.0 * eps)
                })
                .collect();
            (name, grads)
        })
        .collect()
}

/// Per-tensor `‖a − b‖ / max(‖a‖, ‖b‖, 1e-6)`. The floor covers tensors
/// whose true gradient is identically zero (attention key bias).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-6)
}
