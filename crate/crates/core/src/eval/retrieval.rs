use ndarray::{ArrayView1, ArrayView2};

use super::lexicon::LexiconPair;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PairRank {
    pub pair: LexiconPair,
    /// 1-based rank of the true target among the candidates.
    pub rank: usize,
    /// Set when the source or target embedding has zero norm; the pair then
    /// counts as a miss.
    pub degenerate: bool,
}

impl PairRank {
    pub fn is_hit(&self) -> bool {
        self.rank == 1 && !self.degenerate
    }
}

/// Source → target nearest-neighbour retrieval by cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub p_at_1: f64,
    pub ranks: Vec<PairRank>,
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, norm_a: f64, norm_b: f64) -> f64 {
    a.dot(&b) / (norm_a * norm_b)
}

/// Ranks `candidates` for every lexicon source by cosine similarity of the
/// embedding rows; ties go to the smaller token id.
pub fn retrieval_precision_rows(
    embedding: ArrayView2<'_, f64>,
    lexicon: &[LexiconPair],
    candidates: &[u32],
) -> Result<RetrievalReport> {
    if lexicon.is_empty() {
        return Err(Error::Config("empty lexicon".into()));
    }
    let vocab = embedding.nrows() as u32;
    for &c in candidates {
        if c >= vocab {
            return Err(Error::VocabMismatch(format!(
                "candidate id {c} outside the embedding table"
            )));
        }
    }
    for p in lexicon {
        if p.source >= vocab {
            return Err(Error::VocabMismatch(format!(
                "source id {} outside the embedding table",
                p.source
            )));
        }
        if !candidates.contains(&p.target) {
            return Err(Error::Config(format!(
                "candidate set lacks lexicon target {}",
                p.target
            )));
        }
    }
    let norm = |id: u32| {
        embedding
            .row(id as usize)
            .dot(&embedding.row(id as usize))
            .sqrt()
    };
    let candidate_norms: Vec<f64> = candidates.iter().map(|&c| norm(c)).collect();

    let mut ranks = Vec::with_capacity(lexicon.len());
    for &pair in lexicon {
        let src = embedding.row(pair.source as usize);
        let src_norm = norm(pair.source);
        let tgt_norm = norm(pair.target);
        if src_norm == 0.0 || tgt_norm == 0.0 {
            ranks.push(PairRank {
                pair,
                rank: candidates.len(),
                degenerate: true,
            });
            continue;
        }
        let truth = cosine(src, embedding.row(pair.target as usize), src_norm, tgt_norm);
        let better = candidates
            .iter()
            .zip(&candidate_norms)
            .filter(|&(&c, &n)| {
                if c == pair.target || n == 0.0 {
                    return false;
                }
                let sim = cosine(src, embedding.row(c as usize), src_norm, n);
                sim > truth || (sim == truth && c < pair.target)
            })
            .count();
        ranks.push(PairRank {
            pair,
            rank: better + 1,
            degenerate: false,
        });
    }
    let hits = ranks.iter().filter(|r| r.is_hit()).count();
    Ok(RetrievalReport {
        p_at_1: hits as f64 / lexicon.len() as f64,
        ranks,
    })
}

/// [`retrieval_precision_rows`] over the model's embedding table.
pub fn retrieval_precision(
    params: &ModelParams,
    lexicon: &[LexiconPair],
    candidates: &[u32],
) -> Result<RetrievalReport> {
    retrieval_precision_rows(params.embedding.view(), lexicon, candidates)
}
