use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_and_gradients, LossBreakdown, MaskedEntry};
use super::masking::{mask_tokens, MaskingConfig};
use super::optim::Adam;
use crate::aligner::WordAlignment;
use crate::corpus::{encode_pair, SentencePair, TokenizedPair, Vocabulary};
use crate::error::{Error, Result};
use crate::exchange::{build_alignment_set, build_exchange_matrix, ExchangeMatrix};
use crate::model::{ModelConfig, ModelParams};

/// `Weam` trains both heads; `Tlm` is the masked-prediction-only baseline
/// (λ forced to zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Weam,
    Tlm,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weam" => Ok(Mode::Weam),
            "tlm" => Ok(Mode::Tlm),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Weam => "weam",
            Mode::Tlm => "tlm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Preset::desk().training
    }
}

impl TrainingConfig {
    /// λ actually used: zero in TLM mode.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::Weam => self.lambda,
            Mode::Tlm => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Named bundle of architecture, optimisation and masking settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub m_max: usize,
    pub init_std: f64,
    pub identity_heads: bool,
    pub training: TrainingConfig,
    pub masking: MaskingConfig,
}

impl Preset {
    /// Small enough to train on a CPU in minutes.
    pub fn desk() -> Self {
        Self {
            name: "desk",
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_mult: 4,
            m_max: 64,
            init_std: 0.02,
            identity_heads: true,
            training: TrainingConfig {
                mode: Mode::Weam,
                lambda: 1.0,
                learning_rate: 1e-3,
                batch_size: 16,
                epochs: 30,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                seed: 0,
            },
            masking: MaskingConfig::default(),
        }
    }

    /// Full-scale optimisation settings of the original pre-training runs
    /// (lr 5e-5, batch 32, length 128, 2 epochs, masking 0.3, λ = 1) on the
    /// desk architecture.
    pub fn paper() -> Self {
        let desk = Self::desk();
        Self {
            name: "paper",
            m_max: 128,
            training: TrainingConfig {
                learning_rate: 5e-5,
                batch_size: 32,
                epochs: 2,
                ..desk.training
            },
            ..desk
        }
    }

    /// Seeds shuffling with `seed` and masking with `seed + 1000`, so the two
    /// streams differ.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.training.seed = seed;
        self.masking.seed = seed.wrapping_add(1000);
        self
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn model_config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ff_mult: self.ff_mult,
            m_max: self.m_max,
            init_std: self.init_std,
            identity_heads: self.identity_heads,
            seed,
        }
    }
}

/// Encoded pairs with their exchange matrices.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub instances: Vec<(TokenizedPair, ExchangeMatrix)>,
    /// Pairs longer than `m_max`, skipped rather than truncated.
    pub skipped: usize,
}

pub fn prepare_corpus(
    corpus: &[SentencePair],
    alignments: &[WordAlignment],
    vocab: &Vocabulary,
    m_max: usize,
) -> Result<PreparedCorpus> {
    if corpus.len() != alignments.len() {
        return Err(Error::Config(format!(
            "corpus has {} pairs but there are {} alignment lines",
            corpus.len(),
            alignments.len()
        )));
    }
    let mut instances = Vec::with_capacity(corpus.len());
    let mut skipped = 0;
    for (pair, alignment) in corpus.iter().zip(alignments) {
        let tok = match encode_pair(pair, vocab, m_max) {
            Ok(tok) => tok,
            Err(Error::TooLong { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let d = build_alignment_set(alignment, &tok).map_err(|e| match e {
            Error::AlignmentRange(msg) => {
                Error::AlignmentRange(format!("sentence pair on line {}: {msg}", pair.line_no))
            }
            other => other,
        })?;
        let a = build_exchange_matrix(&d, tok.len())?;
        instances.push((tok, a));
    }
    if skipped > 0 {
        info!("skipped {skipped} pairs longer than {m_max} tokens");
    }
    Ok(PreparedCorpus { instances, skipped })
}

/// One optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: LossBreakdown,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.loss;
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.step, l.l_mp, l.l_cp, l.total, l.masked_count, l.aligned_masked_count
        )
    }
}

pub fn write_step_log<W: Write>(mut writer: W, log: &[StepRecord]) -> Result<()> {
    for record in log {
        writeln!(writer, "{record}")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: ModelParams,
    pub log: Vec<StepRecord>,
}

/// Seeded shuffling and dynamic masking, then mask → forward → loss →
/// backward → Adam for every batch.
pub fn train(
    data: &PreparedCorpus,
    model_config: &ModelConfig,
    config: &TrainingConfig,
    masking: &MaskingConfig,
) -> Result<TrainingOutcome> {
    model_config.validate()?;
    train_from(
        ModelParams::init(model_config),
        data,
        model_config,
        config,
        masking,
    )
}

/// [`train`] starting from the given parameters instead of a fresh
/// initialisation.
pub fn train_from(
    mut params: ModelParams,
    data: &PreparedCorpus,
    model_config: &ModelConfig,
    config: &TrainingConfig,
    masking: &MaskingConfig,
) -> Result<TrainingOutcome> {
    model_config.validate()?;
    config.validate()?;
    masking.validate()?;
    if data.instances.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lambda = config.effective_lambda();
    let mut adam = Adam::new(
        &params,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.eps,
    );
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(masking.seed);
    let mut order: Vec<usize> = (0..data.instances.len()).collect();
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<MaskedEntry> = chunk
                .iter()
                .map(|&idx| {
                    let (tok, a) = &data.instances[idx];
                    MaskedEntry {
                        masked: mask_tokens(tok, masking, model_config.vocab_size, &mut mask_rng),
                        exchange: a.clone(),
                    }
                })
                .collect();
            let step = log.len() + 1;
            let (loss, grads) =
                loss_and_gradients(&batch, &params, model_config, lambda).map_err(|e| match e {
                    Error::NonFinite => Error::Diverged { step },
                    other => other,
                })?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged { step });
            }
            adam.step(&mut params, &grads);
            epoch_total += loss.total;
            log.push(StepRecord { step, loss });
        }
        let batches = order.len().div_ceil(config.batch_size);
        debug!(
            "epoch {}: mean loss {:.5}",
            epoch + 1,
            epoch_total / batches as f64
        );
    }
    Ok(TrainingOutcome { params, log })
}
