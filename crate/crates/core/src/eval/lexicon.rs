use std::collections::{HashMap, HashSet};

use crate::aligner::WordAlignment;
use crate::corpus::{SentencePair, Vocabulary};
use crate::error::{Error, Result};

/// A translation pair with how often the aligner linked it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LexiconPair {
    pub source: u32,
    pub target: u32,
    pub frequency: usize,
}

/// Top-`k` aligned (source, target) type pairs by link count, ties broken by
/// source id then target id. Pairs touching a stopword, a reserved token or
/// identical ids are dropped.
pub fn extract_frequent_pairs(
    alignments: &[WordAlignment],
    corpus: &[SentencePair],
    vocab: &Vocabulary,
    k: usize,
    stopwords: &HashSet<u32>,
) -> Result<Vec<LexiconPair>> {
    if k == 0 {
        return Err(Error::Config("lexicon size k must be positive".into()));
    }
    if alignments.len() != corpus.len() {
        return Err(Error::Config(format!(
            "{} alignment lines for {} sentence pairs",
            alignments.len(),
            corpus.len()
        )));
    }
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for (alignment, pair) in alignments.iter().zip(corpus) {
        for &(i, j) in &alignment.links {
            let (Some(s), Some(t)) = (pair.source.get(i), pair.target.get(j)) else {
                return Err(Error::AlignmentRange(format!(
                    "link {i}-{j} outside sentence pair on line {}",
                    pair.line_no
                )));
            };
            let (s, t) = (vocab.id_or_unk(s), vocab.id_or_unk(t));
            let skip = |id: u32| Vocabulary::is_reserved(id) || stopwords.contains(&id);
            if skip(s) || skip(t) || s == t {
                continue;
            }
            *counts.entry((s, t)).or_insert(0) += 1;
        }
    }
    let mut pairs: Vec<LexiconPair> = counts
        .into_iter()
        .map(|((source, target), frequency)| LexiconPair {
            source,
            target,
            frequency,
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then(a.source.cmp(&b.source))
            .then(a.target.cmp(&b.target))
    });
    pairs.truncate(k);
    Ok(pairs)
}

/// The `per_side` most frequent tokens of each language side.
pub fn default_stopwords(
    corpus: &[SentencePair],
    vocab: &Vocabulary,
    per_side: usize,
) -> HashSet<u32> {
    let mut out = HashSet::new();
    for side in [0, 1] {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for pair in corpus {
            let words = if side == 0 {
                &pair.source
            } else {
                &pair.target
            };
            for w in words {
                let id = vocab.id_or_unk(w);
                if !Vocabulary::is_reserved(id) {
                    *counts.entry(id).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out.extend(ranked.into_iter().take(per_side).map(|(id, _)| id));
    }
    out
}
