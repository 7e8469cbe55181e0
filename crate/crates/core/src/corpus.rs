//! Parallel corpus parsing, the shared word vocabulary, and encoding of a
//! sentence pair into the `[CLS] S [SEP] T [SEP]` input sequence.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::Range;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;

pub const RESERVED: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];
pub const NUM_RESERVED: usize = RESERVED.len();

const FIELD_SEPARATOR: &str = " ||| ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub line_no: usize,
}

impl SentencePair {
    pub fn new<S: AsRef<str>>(source: &[S], target: &[S], line_no: usize) -> Self {
        Self {
            source: source.iter().map(|w| w.as_ref().to_string()).collect(),
            target: target.iter().map(|w| w.as_ref().to_string()).collect(),
            line_no,
        }
    }

    /// Parses one `SRC ||| TGT` line.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let separators = line.matches(FIELD_SEPARATOR).count();
        if separators != 1 {
            return Err(parse_err(format!(
                "expected exactly one \"|||\" separator, found {separators}"
            )));
        }
        let (src, tgt) = line.split_once(FIELD_SEPARATOR).unwrap();
        let source: Vec<String> = src.split_whitespace().map(str::to_string).collect();
        let target: Vec<String> = tgt.split_whitespace().map(str::to_string).collect();
        if source.is_empty() {
            return Err(parse_err("empty source side".into()));
        }
        if target.is_empty() {
            return Err(parse_err("empty target side".into()));
        }
        if source.iter().chain(&target).any(|w| w.contains("|||")) {
            return Err(parse_err("word contains \"|||\"".into()));
        }
        Ok(Self {
            source,
            target,
            line_no,
        })
    }

    pub fn len(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads one pair per non-blank line. Line numbers are 1-based and count
/// blank lines.
pub fn load_parallel_corpus<R: BufRead>(reader: R) -> Result<Vec<SentencePair>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(SentencePair::parse_line(line, idx + 1)?);
    }
    Ok(pairs)
}

pub fn write_parallel_corpus<W: Write>(mut writer: W, pairs: &[SentencePair]) -> Result<()> {
    for pair in pairs {
        writeln!(
            writer,
            "{}{}{}",
            pair.source.join(" "),
            FIELD_SEPARATOR,
            pair.target.join(" ")
        )?;
    }
    Ok(())
}

/// Token inventory shared by both languages. Ids 0..5 are the reserved
/// `[PAD] [CLS] [SEP] [MASK] [UNK]` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new()).unwrap()
    }
}

impl Vocabulary {
    /// Builds a vocabulary from the non-reserved tokens, in order.
    pub fn from_tokens<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::VocabMismatch(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `word`, or `[UNK]`.
    pub fn id_or_unk(&self, word: &str) -> u32 {
        self.id(word).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_reserved(id: u32) -> bool {
        (id as usize) < NUM_RESERVED
    }

    /// One token per line, line order = id order.
    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for tok in &self.tokens {
            writeln!(writer, "{tok}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = Vec::new();
        for line in reader.lines() {
            lines.push(line?);
        }
        if lines.len() < NUM_RESERVED
            || lines[..NUM_RESERVED]
                .iter()
                .zip(RESERVED)
                .any(|(l, r)| l != r)
        {
            return Err(Error::VocabMismatch(
                "vocabulary file does not start with the reserved tokens".into(),
            ));
        }
        Self::from_tokens(lines.into_iter().skip(NUM_RESERVED))
    }
}

/// Counts words on both sides, keeps those seen at least `min_count` times,
/// and orders them by frequency (desc) then first occurrence (asc).
pub fn build_vocabulary(corpus: &[SentencePair], min_count: usize, max_size: usize) -> Vocabulary {
    // word -> (count, first occurrence)
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    for pair in corpus {
        for word in pair.source.iter().chain(&pair.target) {
            let entry = counts.entry(word.as_str()).or_insert((0, order));
            entry.0 += 1;
            order += 1;
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts
        .into_iter()
        .filter(|&(w, (c, _))| c >= min_count.max(1) && !RESERVED.contains(&w))
        .map(|(w, (c, first))| (w, c, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size.saturating_sub(NUM_RESERVED));
    Vocabulary::from_tokens(ranked.into_iter().map(|(w, _, _)| w))
        .expect("ranked words are distinct")
}

/// A sentence pair laid out as `[CLS] S [SEP] T [SEP] [PAD]...`.
///
/// One word is one token, so source word `k` sits at `source_span.start + k`.
/// Position ids are simply `0..ids.len()`; there are no segment ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub ids: Vec<u32>,
    pub source_span: Range<usize>,
    pub target_span: Range<usize>,
    pub pad_len: usize,
}

impl TokenizedPair {
    /// Number of non-padding positions.
    pub fn valid_len(&self) -> usize {
        self.ids.len() - self.pad_len
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Whether position `pos` holds a source or target word.
    pub fn is_word_position(&self, pos: usize) -> bool {
        self.source_span.contains(&pos) || self.target_span.contains(&pos)
    }

    pub fn word_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.source_span.clone().chain(self.target_span.clone())
    }

    /// Same pair with padding removed.
    pub fn trimmed(&self) -> TokenizedPair {
        TokenizedPair {
            ids: self.ids[..self.valid_len()].to_vec(),
            source_span: self.source_span.clone(),
            target_span: self.target_span.clone(),
            pad_len: 0,
        }
    }

    /// Same pair padded (or unpadded) to exactly `len` positions.
    pub fn padded_to(&self, len: usize) -> Result<TokenizedPair> {
        let valid = self.valid_len();
        if len < valid {
            return Err(Error::TooLong {
                len: valid,
                max: len,
            });
        }
        let mut ids = self.ids[..valid].to_vec();
        ids.resize(len, PAD);
        Ok(TokenizedPair {
            ids,
            source_span: self.source_span.clone(),
            target_span: self.target_span.clone(),
            pad_len: len - valid,
        })
    }
}

pub fn encode_pair(pair: &SentencePair, vocab: &Vocabulary, m_max: usize) -> Result<TokenizedPair> {
    let len = pair.len() + 3;
    if len > m_max {
        return Err(Error::TooLong { len, max: m_max });
    }
    let mut ids = Vec::with_capacity(m_max);
    ids.push(CLS);
    ids.extend(pair.source.iter().map(|w| vocab.id_or_unk(w)));
    ids.push(SEP);
    ids.extend(pair.target.iter().map(|w| vocab.id_or_unk(w)));
    ids.push(SEP);
    let source_span = 1..1 + pair.source.len();
    let target_span = source_span.end + 1..source_span.end + 1 + pair.target.len();
    let pad_len = m_max - ids.len();
    ids.resize(m_max, PAD);
    Ok(TokenizedPair {
        ids,
        source_span,
        target_span,
        pad_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(src: &str, tgt: &str) -> SentencePair {
        SentencePair::parse_line(&format!("{src} ||| {tgt}"), 1).unwrap()
    }

    #[test]
    fn parses_single_line() {
        let pairs = load_parallel_corpus("the cat ||| die Katze\n".as_bytes()).unwrap();
        assert_eq!(
            pairs,
            vec![SentencePair::new(&["the", "cat"], &["die", "Katze"], 1)]
        );
    }

    #[test]
    fn rejects_two_separators() {
        let err = load_parallel_corpus("a ||| b ||| c\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_missing_separator_and_empty_sides() {
        let input = "ok ||| fine\nno separator here\n";
        assert!(matches!(
            load_parallel_corpus(input.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(load_parallel_corpus(" ||| x\n".as_bytes()).is_err());
        assert!(load_parallel_corpus("x ||| \n".as_bytes()).is_err());
    }

    #[test]
    fn blank_lines_keep_numbering() {
        let pairs = load_parallel_corpus("a ||| b\n\nc ||| d\n".as_bytes()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].line_no, 1);
        assert_eq!(pairs[1].line_no, 3);
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_first_occurrence() {
        let corpus = vec![pair("a a b", "c")];
        let vocab = build_vocabulary(&corpus, 1, 100);
        assert_eq!(&vocab.tokens()[..NUM_RESERVED], RESERVED);
        assert_eq!(&vocab.tokens()[NUM_RESERVED..], ["a", "b", "c"]);
        assert_eq!(vocab.id("a"), Some(5));
    }

    #[test]
    fn vocabulary_edge_cases() {
        assert_eq!(build_vocabulary(&[], 1, 100).len(), NUM_RESERVED);

        let corpus = vec![pair("a b", "c d")];
        let vocab = build_vocabulary(&corpus, 2, 100);
        assert_eq!(vocab.len(), NUM_RESERVED);
        let tok = encode_pair(&corpus[0], &vocab, 8).unwrap();
        assert!(tok.word_positions().all(|p| tok.ids[p] == UNK));

        let vocab = build_vocabulary(&corpus, 1, 7);
        assert_eq!(&vocab.tokens()[NUM_RESERVED..], ["a", "b"]);
    }

    #[test]
    fn encodes_reference_layout() {
        let p = pair("the cat", "die Katze");
        let vocab = build_vocabulary(std::slice::from_ref(&p), 1, 100);
        let tok = encode_pair(&p, &vocab, 8).unwrap();
        let id = |w| vocab.id(w).unwrap();
        assert_eq!(
            tok.ids,
            vec![
                CLS,
                id("the"),
                id("cat"),
                SEP,
                id("die"),
                id("Katze"),
                SEP,
                PAD
            ]
        );
        assert_eq!(tok.source_span, 1..3);
        assert_eq!(tok.target_span, 4..6);
        assert_eq!(tok.pad_len, 1);
    }

    #[test]
    fn unknown_word_becomes_unk() {
        let vocab = Vocabulary::from_tokens(["the", "die", "Katze"]).unwrap();
        let tok = encode_pair(&pair("the cat", "die Katze"), &vocab, 8).unwrap();
        assert_eq!(tok.ids[2], UNK);
        assert_eq!(tok.source_span, 1..3);
        assert_eq!(tok.target_span, 4..6);
    }

    #[test]
    fn too_long_pair_is_rejected() {
        let p = pair("a b c d e", "f g h i j");
        let vocab = build_vocabulary(std::slice::from_ref(&p), 1, 100);
        assert!(matches!(
            encode_pair(&p, &vocab, 8),
            Err(Error::TooLong { len: 13, max: 8 })
        ));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let vocab = Vocabulary::from_tokens(["x", "y"]).unwrap();
        let mut buf = Vec::new();
        vocab.write(&mut buf).unwrap();
        assert_eq!(Vocabulary::read(buf.as_slice()).unwrap(), vocab);
        assert!(Vocabulary::read("x\ny\n".as_bytes()).is_err());
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-e]{1,2}"
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(word(), 1..6)
    }

    proptest! {
        #[test]
        fn encoding_round_trips_and_counts_specials(
            corpus in prop::collection::vec((sentence(), sentence()), 1..6),
            min_count in 1usize..3,
        ) {
            let corpus: Vec<SentencePair> = corpus
                .into_iter()
                .enumerate()
                .map(|(i, (s, t))| SentencePair::new(&s, &t, i + 1))
                .collect();
            let vocab = build_vocabulary(&corpus, min_count, 1000);
            prop_assert_eq!(&vocab, &build_vocabulary(&corpus, min_count, 1000));
            for p in &corpus {
                let tok = encode_pair(p, &vocab, 16).unwrap();
                prop_assert_eq!(tok.ids.len(), 16);
                prop_assert_eq!(tok.ids.iter().filter(|&&t| t == SEP).count(), 2);
                prop_assert_eq!(tok.ids.iter().filter(|&&t| t == CLS).count(), 1);
                prop_assert_eq!(tok.ids[0], CLS);
                prop_assert_eq!(tok.source_span.len(), p.source.len());
                prop_assert_eq!(tok.target_span.len(), p.target.len());
                prop_assert!(tok.ids[tok.valid_len()..].iter().all(|&t| t == PAD));
                for (k, w) in p.source.iter().enumerate() {
                    let id = tok.ids[tok.source_span.start + k];
                    if id != UNK {
                        prop_assert_eq!(vocab.token(id).unwrap(), w.as_str());
                    }
                }
                for (k, w) in p.target.iter().enumerate() {
                    let id = tok.ids[tok.target_span.start + k];
                    if id != UNK {
                        prop_assert_eq!(vocab.token(id).unwrap(), w.as_str());
                    }
                }
            }
        }
    }
}
