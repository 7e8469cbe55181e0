//! Synthetic parallel corpora with a known bilingual dictionary: every target
//! sentence is the word-for-word, order-preserving image of its source under
//! a random bijection. Used as ground truth for the aligner and for the
//! embedding-alignment experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aligner::WordAlignment;
use crate::corpus::SentencePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub types: usize,
    pub pairs: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            types: 50,
            pairs: 200,
            min_len: 3,
            max_len: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub pairs: Vec<SentencePair>,
    /// `(source word, target word)` for every type, in source-type order.
    pub dictionary: Vec<(String, String)>,
    /// Gold links; sentence `k` links word `i` to word `i`.
    pub gold: Vec<WordAlignment>,
}

pub fn bijective_corpus(config: &SynthConfig, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image: Vec<usize> = (0..config.types).collect();
    image.shuffle(&mut rng);
    let dictionary: Vec<(String, String)> = image
        .iter()
        .enumerate()
        .map(|(k, &t)| (format!("src{k}"), format!("TGT{t}")))
        .collect();

    let mut pairs = Vec::with_capacity(config.pairs);
    let mut gold = Vec::with_capacity(config.pairs);
    for line in 0..config.pairs {
        let len = rng.random_range(config.min_len..=config.max_len);
        let words: Vec<usize> = (0..len)
            .map(|_| rng.random_range(0..config.types))
            .collect();
        let source: Vec<&str> = words.iter().map(|&w| dictionary[w].0.as_str()).collect();
        let target: Vec<&str> = words.iter().map(|&w| dictionary[w].1.as_str()).collect();
        pairs.push(SentencePair::new(&source, &target, line + 1));
        gold.push(WordAlignment::new((0..len).map(|i| (i, i)).collect()));
    }
    SyntheticCorpus {
        pairs,
        dictionary,
        gold,
    }
}
