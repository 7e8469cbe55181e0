//! Alignment sets over concatenated-sequence positions and the exchange
//! matrix `A` that swaps the representations of aligned positions.

use std::collections::{BTreeSet, HashSet};

use ndarray::{Array2, ArrayView2};

use crate::aligner::WordAlignment;
use crate::corpus::TokenizedPair;
use crate::error::{Error, Result};

/// One-to-one `(source position, target position)` pairs in sequence
/// coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    pairs: Vec<(usize, usize)>,
}

impl AlignmentSet {
    /// Validates one-to-one-ness; span membership is checked by
    /// [`build_alignment_set`].
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &(i, j) in &pairs {
            if i == j || !seen.insert(i) || !seen.insert(j) {
                return Err(Error::AlignmentRange(format!(
                    "pair ({i}, {j}) breaks one-to-one alignment"
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Maps word links onto the `[CLS] S [SEP] T [SEP]` layout. Links that would
/// reuse a position are dropped; the link with the smaller target index wins.
pub fn build_alignment_set(alignment: &WordAlignment, tok: &TokenizedPair) -> Result<AlignmentSet> {
    let (n_src, n_tgt) = (tok.source_span.len(), tok.target_span.len());
    let mut links = alignment.links.clone();
    for &(i, j) in &links {
        if i >= n_src || j >= n_tgt {
            return Err(Error::AlignmentRange(format!(
                "link {i}-{j} outside a {n_src}x{n_tgt} sentence pair"
            )));
        }
    }
    links.sort_by_key(|&(i, j)| (j, i));
    let mut used_src = HashSet::new();
    let mut used_tgt = HashSet::new();
    let mut pairs = Vec::with_capacity(links.len());
    for (i, j) in links {
        if used_src.contains(&i) || used_tgt.contains(&j) {
            continue;
        }
        used_src.insert(i);
        used_tgt.insert(j);
        pairs.push((tok.source_span.start + i, tok.target_span.start + j));
    }
    Ok(AlignmentSet { pairs })
}

/// Sparse symmetric 0/1 matrix with zero diagonal; each row has at most one
/// nonzero, so it is stored as a partner table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeMatrix {
    partner: Vec<Option<usize>>,
}

pub fn build_exchange_matrix(d: &AlignmentSet, m: usize) -> Result<ExchangeMatrix> {
    let mut partner = vec![None; m];
    for &(i, j) in d.pairs() {
        if i >= m || j >= m {
            return Err(Error::AlignmentRange(format!(
                "pair ({i}, {j}) outside a sequence of length {m}"
            )));
        }
        partner[i] = Some(j);
        partner[j] = Some(i);
    }
    Ok(ExchangeMatrix { partner })
}

impl ExchangeMatrix {
    pub fn zeros(m: usize) -> Self {
        Self {
            partner: vec![None; m],
        }
    }

    pub fn size(&self) -> usize {
        self.partner.len()
    }

    /// Partner of position `i`, if aligned.
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.partner.get(i).copied().flatten()
    }

    pub fn is_aligned(&self, i: usize) -> bool {
        self.partner(i).is_some()
    }

    /// All `(row, col)` positions holding a one.
    pub fn entries(&self) -> BTreeSet<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|j| (i, j)))
            .collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.partner(row) == Some(col) {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.size();
        Array2::from_shape_fn((m, m), |(r, c)| self.get(r, c))
    }

    /// A restricted to the same first `m` positions.
    pub fn truncated(&self, m: usize) -> Self {
        let partner = self.partner[..m.min(self.size())]
            .iter()
            .map(|p| p.filter(|&j| j < m))
            .collect();
        Self { partner }
    }
}

/// `Aᵀ·H`: row `i` of the result is row `partner(i)` of `h`, or zeros.
pub fn apply_exchange(a: &ExchangeMatrix, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.size() != h.nrows() {
        return Err(Error::Dimension(format!(
            "exchange matrix of size {} applied to {} rows",
            a.size(),
            h.nrows()
        )));
    }
    let mut out = Array2::zeros(h.raw_dim());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        if let Some(j) = a.partner(i) {
            row.assign(&h.row(j));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, encode_pair, SentencePair};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn the_cat() -> TokenizedPair {
        let p = SentencePair::new(&["the", "cat"], &["die", "Katze"], 1);
        let vocab = build_vocabulary(std::slice::from_ref(&p), 1, 100);
        encode_pair(&p, &vocab, 8).unwrap()
    }

    #[test]
    fn offsets_word_links() {
        let tok = the_cat();
        let d = build_alignment_set(&WordAlignment::new(vec![(0, 0), (1, 1)]), &tok).unwrap();
        assert_eq!(d.pairs(), &[(1, 4), (2, 5)]);
        let d = build_alignment_set(&WordAlignment::default(), &tok).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn enforces_one_to_one() {
        let tok = the_cat();
        let d = build_alignment_set(&WordAlignment::new(vec![(0, 1), (0, 0)]), &tok).unwrap();
        assert_eq!(d.pairs(), &[(1, 4)]);
        let d = build_alignment_set(&WordAlignment::new(vec![(1, 0), (0, 0)]), &tok).unwrap();
        assert_eq!(d.pairs(), &[(1, 4)]);
    }

    #[test]
    fn rejects_out_of_range_links() {
        let tok = the_cat();
        assert!(build_alignment_set(&WordAlignment::new(vec![(2, 0)]), &tok).is_err());
        assert!(build_alignment_set(&WordAlignment::new(vec![(0, 2)]), &tok).is_err());
    }

    #[test]
    fn exchange_matrix_entries() {
        let a = build_exchange_matrix(&AlignmentSet::new(vec![(1, 4)]).unwrap(), 6).unwrap();
        assert_eq!(a.entries(), BTreeSet::from([(1, 4), (4, 1)]));
        assert!(build_exchange_matrix(&AlignmentSet::default(), 5)
            .unwrap()
            .entries()
            .is_empty());

        let a =
            build_exchange_matrix(&AlignmentSet::new(vec![(1, 4), (2, 5)]).unwrap(), 8).unwrap();
        let dense = a.to_dense();
        assert_eq!(dense.sum(), 4.0);
        assert_eq!(dense, dense.t());
        assert!(dense.diag().iter().all(|&v| v == 0.0));

        assert!(build_exchange_matrix(&AlignmentSet::new(vec![(1, 6)]).unwrap(), 6).is_err());
    }

    #[test]
    fn exchange_swaps_rows() {
        let a = build_exchange_matrix(&AlignmentSet::new(vec![(1, 4)]).unwrap(), 6).unwrap();
        let h = Array2::from_shape_fn((6, 3), |(r, c)| (r * 3 + c) as f64 + 0.5);
        let out = apply_exchange(&a, h.view()).unwrap();
        assert_eq!(out.row(1), h.row(4));
        assert_eq!(out.row(4), h.row(1));
        for r in [0, 2, 3, 5] {
            assert!(out.row(r).iter().all(|&v| v == 0.0));
        }
        assert_eq!(out, a.to_dense().t().dot(&h));

        let zero = apply_exchange(&ExchangeMatrix::zeros(6), h.view()).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(apply_exchange(&ExchangeMatrix::zeros(5), h.view()).is_err());
    }

    fn alignment_set(m: usize) -> impl Strategy<Value = AlignmentSet> {
        Just((0..m).collect::<Vec<_>>())
            .prop_shuffle()
            .prop_flat_map(move |perm| {
                (0..=m / 2).prop_map(move |k| {
                    AlignmentSet::new(
                        perm.chunks(2)
                            .take(k)
                            .filter(|c| c.len() == 2)
                            .map(|c| (c[0], c[1]))
                            .collect(),
                    )
                    .unwrap()
                })
            })
    }

    proptest! {
        #[test]
        fn exchange_is_a_partial_involution(
            d in alignment_set(12),
            h1 in prop::collection::vec(-5.0f64..5.0, 12 * 4),
            h2 in prop::collection::vec(-5.0f64..5.0, 12 * 4),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let a = build_exchange_matrix(&d, 12).unwrap();
            let dense = a.to_dense();
            prop_assert_eq!(&dense, &dense.t());
            for r in 0..12 {
                prop_assert_eq!(dense[[r, r]], 0.0);
                let s = dense.row(r).sum();
                prop_assert!(s == 0.0 || s == 1.0);
            }
            let h1 = Array2::from_shape_vec((12, 4), h1).unwrap();
            let h2 = Array2::from_shape_vec((12, 4), h2).unwrap();
            let twice = apply_exchange(&a, apply_exchange(&a, h1.view()).unwrap().view()).unwrap();
            for r in 0..12 {
                if a.is_aligned(r) {
                    prop_assert_eq!(twice.row(r), h1.row(r));
                } else {
                    prop_assert!(twice.row(r).iter().all(|&v| v == 0.0));
                }
            }
            let combo = &h1 * alpha + &h2 * beta;
            let lhs = apply_exchange(&a, combo.view()).unwrap();
            let rhs = apply_exchange(&a, h1.view()).unwrap() * alpha
                + apply_exchange(&a, h2.view()).unwrap() * beta;
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
