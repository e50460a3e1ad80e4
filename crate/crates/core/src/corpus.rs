//! Vocabularies, bag-of-words matrices and evaluation-side corpus types.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Language, Result};

/// A per-language token index, ordered by document frequency (descending)
/// with lexicographic tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabularyRepr", try_from = "VocabularyRepr")]
pub struct Vocabulary {
    language: Language,
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    language: Language,
    tokens: Vec<String>,
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { language: v.language, tokens: v.tokens }
    }
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_tokens(r.language, r.tokens)
    }
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list (already ordered).
    pub fn from_tokens(language: Language, tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { language, tokens, index })
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.tokens[i]
    }
}

pub fn build_vocabulary<S: AsRef<str>>(
    raw_docs: &[Vec<S>],
    language: Language,
    min_df: usize,
    max_vocab: usize,
) -> Result<Vocabulary> {
    if raw_docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if min_df == 0 || max_vocab == 0 {
        return Err(Error::InvalidArgument("min_df and max_vocab must be at least 1".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in raw_docs {
        let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for w in unique {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, c)| c >= min_df).collect();
    // BTreeMap iteration is already lexicographic, so a stable sort on df keeps ties ordered.
    kept.sort_by(|a, b| b.1.cmp(&a.1));
    kept.truncate(max_vocab);
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::from_tokens(language, kept.into_iter().map(|(w, _)| String::from(w)).collect())
}

/// Document-term counts for one language. Row `d` is the bag of words of
/// the document whose stable id is `doc_ids[d]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowMatrix {
    language: Language,
    n_words: usize,
    rows: Vec<Vec<(u32, u32)>>,
    doc_ids: Vec<usize>,
}

impl BowMatrix {
    /// Builds a matrix from sparse rows of `(word index, count)`; every row must
    /// be nonempty, sorted by word index and carry positive counts.
    pub fn from_sparse_rows(
        language: Language,
        n_words: usize,
        rows: Vec<Vec<(u32, u32)>>,
        doc_ids: Vec<usize>,
    ) -> Result<Self> {
        if rows.len() != doc_ids.len() {
            return Err(Error::ShapeMismatch(format!("{} rows but {} doc ids", rows.len(), doc_ids.len())));
        }
        for (d, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Precondition(format!("document {} is empty", doc_ids[d])));
            }
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::InvalidArgument(format!("row {d} not sorted by word index")));
                }
            }
            for &(j, c) in row {
                if j as usize >= n_words || c == 0 {
                    return Err(Error::InvalidArgument(format!("row {d} has invalid entry ({j}, {c})")));
                }
            }
        }
        Ok(BowMatrix { language, n_words, rows, doc_ids })
    }

    pub fn from_dense(language: Language, dense: &[Vec<u32>], doc_ids: Vec<usize>) -> Result<Self> {
        let n_words = dense.first().map_or(0, Vec::len);
        let rows = dense
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &c)| c > 0).map(|(j, &c)| (j as u32, c)).collect())
            .collect();
        BowMatrix::from_sparse_rows(language, n_words, rows, doc_ids)
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn doc_ids(&self) -> &[usize] {
        &self.doc_ids
    }

    pub fn sparse_row(&self, d: usize) -> &[(u32, u32)] {
        &self.rows[d]
    }

    pub fn dense_row(&self, d: usize) -> Vec<u32> {
        let mut out = vec![0; self.n_words];
        for &(j, c) in &self.rows[d] {
            out[j as usize] = c;
        }
        out
    }

    pub fn count(&self, d: usize, j: usize) -> u32 {
        self.rows[d]
            .binary_search_by_key(&(j as u32), |&(w, _)| w)
            .map_or(0, |p| self.rows[d][p].1)
    }

    pub fn row_total(&self, d: usize) -> u64 {
        self.rows[d].iter().map(|&(_, c)| c as u64).sum()
    }

    /// Keeps only the listed rows, in order.
    pub fn select(&self, idx: &[usize]) -> BowMatrix {
        BowMatrix {
            language: self.language,
            n_words: self.n_words,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            doc_ids: idx.iter().map(|&i| self.doc_ids[i]).collect(),
        }
    }
}

/// Result of [`vectorize`]: the matrix plus the input positions of dropped documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vectorized {
    pub bow: BowMatrix,
    pub dropped: Vec<usize>,
}

/// Counts in-vocabulary tokens per document. Documents with no
/// in-vocabulary token are dropped; their input positions are reported.
/// Stable ids are the input positions.
pub fn vectorize<S: AsRef<str>>(raw_docs: &[Vec<S>], vocab: &Vocabulary) -> Vectorized {
    let mut rows = Vec::new();
    let mut doc_ids = Vec::new();
    let mut dropped = Vec::new();
    for (d, doc) in raw_docs.iter().enumerate() {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for tok in doc {
            if let Some(j) = vocab.get(tok.as_ref()) {
                *counts.entry(j as u32).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            dropped.push(d);
        } else {
            rows.push(counts.into_iter().collect());
            doc_ids.push(d);
        }
    }
    let bow = BowMatrix { language: vocab.language(), n_words: vocab.len(), rows, doc_ids };
    Vectorized { bow, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRole {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub doc_ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub role: SplitRole,
}

impl LabeledSplit {
    pub fn new(doc_ids: Vec<usize>, labels: Vec<usize>, role: SplitRole) -> Result<Self> {
        if doc_ids.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!("{} docs but {} labels", doc_ids.len(), labels.len())));
        }
        Ok(LabeledSplit { doc_ids, labels, role })
    }

    /// Checks that every test label also occurs in `train`.
    pub fn check_against_train(&self, train: &LabeledSplit) -> Result<()> {
        let seen: BTreeSet<usize> = train.labels.iter().copied().collect();
        match self.labels.iter().find(|l| !seen.contains(l)) {
            Some(l) => Err(Error::InvalidArgument(format!("test label {l} absent from training split"))),
            None => Ok(()),
        }
    }
}

/// Aligned document pairs, each side reduced to the set of in-vocabulary
/// word indices it contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedReference {
    pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
}

impl AlignedReference {
    pub fn new(pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("aligned reference needs at least one pair".into()));
        }
        Ok(AlignedReference { pairs })
    }

    /// Maps token lists through the vocabularies, dropping unknown words.
    pub fn from_token_pairs<S: AsRef<str>>(
        side1: &[Vec<S>],
        side2: &[Vec<S>],
        vocab1: &Vocabulary,
        vocab2: &Vocabulary,
    ) -> Result<Self> {
        if side1.len() != side2.len() {
            return Err(Error::ShapeMismatch(format!(
                "aligned reference sides have {} and {} documents",
                side1.len(),
                side2.len()
            )));
        }
        let to_set = |doc: &Vec<S>, v: &Vocabulary| doc.iter().filter_map(|t| v.get(t.as_ref())).collect();
        let pairs = side1.iter().zip(side2).map(|(a, b)| (to_set(a, vocab1), to_set(b, vocab2))).collect();
        AlignedReference::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(BTreeSet<usize>, BTreeSet<usize>)] {
        &self.pairs
    }
}
