//! Statistical word aligner: IBM Model 2 with a diagonal-favouring distortion
//! prior (the fast_align reparameterisation), trained by plain EM.
//!
//! The model is asymmetric: every target word is generated either by one
//! source word or by NULL.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use log::info;

use crate::corpus::{SentencePair, Vocabulary};
use crate::error::{Error, Result};

/// Source id standing for the NULL word.
pub const NULL_SOURCE: u32 = u32::MAX;

/// Probability used for (source, target) pairs the table has never seen.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignerConfig {
    pub iterations: usize,
    /// Sharpness of the diagonal prior.
    pub tension: f64,
    /// Prior mass for generating a target word from NULL.
    pub null_prob: f64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            tension: 4.0,
            null_prob: 0.08,
        }
    }
}

impl AlignerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("aligner iterations must be >= 1".into()));
        }
        if !(self.tension.is_finite() && self.tension >= 0.0) {
            return Err(Error::Config(format!("invalid tension {}", self.tension)));
        }
        if !(0.0..1.0).contains(&self.null_prob) {
            return Err(Error::Config(format!(
                "null probability {} outside [0, 1)",
                self.null_prob
            )));
        }
        Ok(())
    }
}

/// Lexical translation probabilities `t(target | source)`.
///
/// A freshly created table is uniform over the vocabulary; it becomes sparse
/// after the first M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTable {
    probs: BTreeMap<(u32, u32), f64>,
    sources: BTreeSet<u32>,
    uniform: Option<f64>,
}

impl TranslationTable {
    pub fn uniform(vocab: &Vocabulary) -> Self {
        Self {
            probs: BTreeMap::new(),
            sources: BTreeSet::new(),
            uniform: Some(1.0 / vocab.len() as f64),
        }
    }

    /// Builds a table from raw entries, normalising each source row.
    pub fn from_entries<I: IntoIterator<Item = ((u32, u32), f64)>>(entries: I) -> Self {
        let mut probs = BTreeMap::new();
        for (key, value) in entries {
            *probs.entry(key).or_insert(0.0) += value;
        }
        let mut table = Self {
            probs,
            sources: BTreeSet::new(),
            uniform: None,
        };
        table.normalize();
        table
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform.is_some()
    }

    /// `t(target | source)`, floored for unseen pairs.
    pub fn prob(&self, source: u32, target: u32) -> f64 {
        if let Some(u) = self.uniform {
            return u;
        }
        self.probs
            .get(&(source, target))
            .copied()
            .unwrap_or(PROB_FLOOR)
    }

    pub fn entries(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.probs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn sources(&self) -> &BTreeSet<u32> {
        &self.sources
    }

    /// `Σ_e t(e | source)` over stored entries.
    pub fn row_sum(&self, source: u32) -> f64 {
        self.probs
            .range((source, 0)..=(source, u32::MAX))
            .map(|(_, v)| v)
            .sum()
    }

    fn normalize(&mut self) {
        let mut totals: BTreeMap<u32, f64> = BTreeMap::new();
        for (&(f, _), &v) in &self.probs {
            *totals.entry(f).or_insert(0.0) += v;
        }
        self.probs.retain(|&(f, _), _| totals[&f] > 0.0);
        for (&(f, _), v) in self.probs.iter_mut() {
            *v /= totals[&f];
        }
        self.sources = totals
            .into_iter()
            .filter(|&(_, t)| t > 0.0)
            .map(|(f, _)| f)
            .collect();
    }

    fn check_ids(&self, vocab: &Vocabulary) -> Result<()> {
        let limit = vocab.len() as u32;
        for &(f, e) in self.probs.keys() {
            if (f != NULL_SOURCE && f >= limit) || e >= limit {
                return Err(Error::VocabMismatch(format!(
                    "translation table entry ({f}, {e}) outside a vocabulary of {limit}"
                )));
            }
        }
        Ok(())
    }
}

/// `exp(-tension * |i/n - j/m|)` for 1-based positions.
pub fn diagonal_weight(i: usize, j: usize, n: usize, m: usize, tension: f64) -> f64 {
    let d = (i as f64 / n as f64 - j as f64 / m as f64).abs();
    (-tension * d).exp()
}

/// Prior over source positions for target position `j` (0-based), excluding NULL.
fn position_prior(j: usize, n: usize, m: usize, config: &AlignerConfig, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..n).map(|i| diagonal_weight(i + 1, j + 1, n, m, config.tension)));
    let z: f64 = out.iter().sum();
    let scale = (1.0 - config.null_prob) / z;
    out.iter_mut().for_each(|w| *w *= scale);
}

fn encode_side(words: &[String], vocab: &Vocabulary) -> Vec<u32> {
    words.iter().map(|w| vocab.id_or_unk(w)).collect()
}

/// One EM step. Returns the re-estimated table and the corpus
/// log-likelihood under the *input* table.
pub fn em_iteration(
    corpus: &[SentencePair],
    vocab: &Vocabulary,
    table: &TranslationTable,
    config: &AlignerConfig,
) -> Result<(TranslationTable, f64)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    config.validate()?;
    table.check_ids(vocab)?;

    let mut counts: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut log_likelihood = 0.0;
    let mut prior = Vec::new();
    let mut scores = Vec::new();
    for pair in corpus {
        let src = encode_side(&pair.source, vocab);
        let tgt = encode_side(&pair.target, vocab);
        let (n, m) = (src.len(), tgt.len());
        for (j, &e) in tgt.iter().enumerate() {
            position_prior(j, n, m, config, &mut prior);
            scores.clear();
            scores.extend(src.iter().zip(&prior).map(|(&f, &p)| p * table.prob(f, e)));
            let null_score = config.null_prob * table.prob(NULL_SOURCE, e);
            let total: f64 = scores.iter().sum::<f64>() + null_score;
            log_likelihood += total.ln();
            for (&f, &s) in src.iter().zip(&scores) {
                if s > 0.0 {
                    *counts.entry((f, e)).or_insert(0.0) += s / total;
                }
            }
            if null_score > 0.0 {
                *counts.entry((NULL_SOURCE, e)).or_insert(0.0) += null_score / total;
            }
        }
    }
    Ok((TranslationTable::from_entries(counts), log_likelihood))
}

/// Runs `config.iterations` EM steps from the uniform table. The returned
/// vector holds the log-likelihood observed at the start of each step.
pub fn train_aligner(
    corpus: &[SentencePair],
    vocab: &Vocabulary,
    config: &AlignerConfig,
) -> Result<(TranslationTable, Vec<f64>)> {
    config.validate()?;
    let mut table = TranslationTable::uniform(vocab);
    let mut history = Vec::with_capacity(config.iterations);
    for iter in 0..config.iterations {
        let (next, ll) = em_iteration(corpus, vocab, &table, config)?;
        info!("aligner iteration {}: log-likelihood {ll:.6}", iter + 1);
        history.push(ll);
        table = next;
    }
    Ok((table, history))
}

/// Word-level links `(source index, target index)`, both 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordAlignment {
    pub links: Vec<(usize, usize)>,
}

impl WordAlignment {
    pub fn new(links: Vec<(usize, usize)>) -> Self {
        Self { links }
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Links each target word to its most probable generator; NULL-generated
/// words stay unlinked. Ties go to the smallest source index.
pub fn viterbi_align(
    pair: &SentencePair,
    vocab: &Vocabulary,
    table: &TranslationTable,
    config: &AlignerConfig,
) -> WordAlignment {
    let src = encode_side(&pair.source, vocab);
    let tgt = encode_side(&pair.target, vocab);
    let (n, m) = (src.len(), tgt.len());
    let mut prior = Vec::new();
    let mut links = Vec::new();
    for (j, &e) in tgt.iter().enumerate() {
        position_prior(j, n, m, config, &mut prior);
        let mut best: Option<(usize, f64)> = None;
        for (i, (&f, &p)) in src.iter().zip(&prior).enumerate() {
            let score = p * table.prob(f, e);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let null_score = config.null_prob * table.prob(NULL_SOURCE, e);
        if let Some((i, score)) = best {
            if score >= null_score {
                links.push((i, j));
            }
        }
    }
    WordAlignment { links }
}

pub fn write_pharaoh<W: Write>(mut writer: W, alignments: &[WordAlignment]) -> Result<()> {
    let mut line = String::new();
    for a in alignments {
        line.clear();
        for (k, (i, j)) in a.links.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            write!(line, "{i}-{j}").unwrap();
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn read_pharaoh<R: BufRead>(reader: R) -> Result<Vec<WordAlignment>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let mut links = Vec::new();
        for token in line.split_whitespace() {
            let parsed = token
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
            match parsed {
                Some(link) => links.push(link),
                None => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("malformed alignment link {token:?}"),
                    })
                }
            }
        }
        out.push(WordAlignment { links });
    }
    Ok(out)
}
