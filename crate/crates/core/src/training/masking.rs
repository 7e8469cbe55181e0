use rand::Rng;

use crate::corpus::{TokenizedPair, MASK, NUM_RESERVED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingConfig {
    /// Probability that a word position is selected for prediction.
    pub mask_prob: f64,
    /// Of the selected positions: fraction replaced by `[MASK]`,
    pub replace_mask: f64,
    /// by a random vocabulary word,
    pub replace_random: f64,
    /// and left unchanged.
    pub keep: f64,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            mask_prob: 0.3,
            replace_mask: 0.8,
            replace_random: 0.1,
            keep: 0.1,
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_prob) {
            return Err(Error::Config(format!(
                "mask_prob {} outside [0, 1)",
                self.mask_prob
            )));
        }
        let fractions = [self.replace_mask, self.replace_random, self.keep];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
            || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "corruption fractions {fractions:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// How a selected position was corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    Mask,
    Random,
    Keep,
}

/// A corrupted input with the original ids of the selected positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedInput {
    pub input: TokenizedPair,
    /// `(position, original token id)` in increasing position order.
    pub labels: Vec<(usize, u32)>,
    pub corruptions: Vec<Corruption>,
}

/// Selects each source/target word position independently with
/// `mask_prob`, then applies the 80/10/10 corruption. `[CLS]`, `[SEP]` and
/// padding are never selected.
pub fn mask_tokens<R: Rng + ?Sized>(
    tok: &TokenizedPair,
    config: &MaskingConfig,
    vocab_size: usize,
    rng: &mut R,
) -> MaskedInput {
    let mut input = tok.clone();
    let mut labels = Vec::new();
    let mut corruptions = Vec::new();
    for pos in tok.word_positions() {
        if rng.random::<f64>() >= config.mask_prob {
            continue;
        }
        let original = tok.ids[pos];
        let r = rng.random::<f64>();
        let kind = if r < config.replace_mask {
            input.ids[pos] = MASK;
            Corruption::Mask
        } else if r < config.replace_mask + config.replace_random && vocab_size > NUM_RESERVED {
            input.ids[pos] = rng.random_range(NUM_RESERVED..vocab_size) as u32;
            Corruption::Random
        } else {
            Corruption::Keep
        };
        labels.push((pos, original));
        corruptions.push(kind);
    }
    MaskedInput {
        input,
        labels,
        corruptions,
    }
}
