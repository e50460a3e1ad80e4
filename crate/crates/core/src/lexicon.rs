//! Embedding tables, exact cosine neighbour search and global bag-of-words
//! augmentation.
//!
//! For a document with active word set `W` in language `l`, the augmented
//! row over the joint vocabulary is
//!
//! ```text
//! own[j]   = Σ_{w∈W} ([j = w] + [j ∈ intra(w)])
//! other[j] = Σ_{w∈W} [j ∈ cross(w)]
//! ```
//!
//! laid out as `[own | other]` for language 1 and `[other | own]` for
//! language 2, so column `j < |V1|` always refers to a language-1 word.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::corpus::{BowMatrix, Vocabulary};
use crate::linalg::{dot, norm, Matrix};
use crate::{Error, Language, Result};

/// Word vectors aligned to a vocabulary. `missing[j]` marks words that had
/// no entry in the embedding source (their row is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    language: Language,
    vectors: Matrix,
    missing: Vec<bool>,
}

impl WordEmbeddingTable {
    pub fn new(language: Language, vectors: Matrix, missing: Vec<bool>) -> Result<Self> {
        if missing.len() != vectors.rows() {
            return Err(Error::ShapeMismatch(format!("{} flags for {} rows", missing.len(), vectors.rows())));
        }
        if !vectors.is_finite() {
            return Err(Error::InvalidArgument("word embeddings contain non-finite values".into()));
        }
        Ok(WordEmbeddingTable { language, vectors, missing })
    }

    pub fn from_vectors(language: Language, vectors: Matrix) -> Result<Self> {
        let missing = vec![false; vectors.rows()];
        WordEmbeddingTable::new(language, vectors, missing)
    }

    /// Lays `(word, vector)` entries out in vocabulary order. Entries for
    /// out-of-vocabulary words are ignored; vocabulary words without an
    /// entry get a zero row flagged as missing.
    pub fn align<S, I>(vocab: &Vocabulary, entries: I) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, Vec<f64>)>,
    {
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
        let mut dim = None;
        for (word, v) in entries {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::ShapeMismatch(format!("dimension mismatch: {} vs {d}", v.len())))
                }
                _ => {}
            }
            if let Some(j) = vocab.get(word.as_ref()) {
                rows[j] = Some(v);
            }
        }
        let dim = dim.ok_or_else(|| Error::InvalidArgument("no embedding entries".into()))?;
        if rows.iter().all(Option::is_none) {
            return Err(Error::InvalidArgument("embedding coverage of the vocabulary is zero".into()));
        }
        let missing: Vec<bool> = rows.iter().map(Option::is_none).collect();
        let vectors = Matrix::from_fn(vocab.len(), dim, |j, m| rows[j].as_ref().map_or(0.0, |r| r[m]));
        WordEmbeddingTable::new(vocab.language(), vectors, missing)
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn coverage(&self) -> f64 {
        if self.missing.is_empty() {
            return 0.0;
        }
        self.missing.iter().filter(|m| !**m).count() as f64 / self.missing.len() as f64
    }

    /// Rows normalised to unit length; zero-norm rows come back as `None`.
    fn unit_rows(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.vectors.rows())
            .map(|j| {
                let r = self.vectors.row(j);
                let n = norm(r);
                (n > 0.0).then(|| r.iter().map(|x| x / n).collect())
            })
            .collect()
    }
}

/// Pretrained document vectors aligned to a [`BowMatrix`]'s rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbeddingTable {
    language: Language,
    vectors: Matrix,
}

impl DocEmbeddingTable {
    pub fn new(language: Language, vectors: Matrix) -> Result<Self> {
        if !vectors.is_finite() {
            return Err(Error::InvalidArgument("document embeddings contain non-finite values".into()));
        }
        Ok(DocEmbeddingTable { language, vectors })
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn n_docs(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborConfig {
    pub k_intra: usize,
    pub k_cross: usize,
    /// Candidates with cosine below this value are never neighbours.
    pub min_cosine: Option<f64>,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig { k_intra: 5, k_cross: 5, min_cosine: None }
    }
}

/// Exact top-k cosine neighbour lists for both languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborIndex {
    k_intra: usize,
    k_cross: usize,
    /// `intra[lang][j]`: neighbours of word `j` in its own language.
    intra: [Vec<Vec<u32>>; 2],
    /// `cross[lang][j]`: neighbours of word `j` in the other language.
    cross: [Vec<Vec<u32>>; 2],
}

impl NeighborIndex {
    pub fn k_intra(&self) -> usize {
        self.k_intra
    }

    pub fn k_cross(&self) -> usize {
        self.k_cross
    }

    pub fn vocab_size(&self, lang: Language) -> usize {
        self.intra[lang.index()].len()
    }

    pub fn intra(&self, lang: Language, word: usize) -> &[u32] {
        &self.intra[lang.index()][word]
    }

    pub fn cross(&self, lang: Language, word: usize) -> &[u32] {
        &self.cross[lang.index()][word]
    }

    /// Builds an index from explicit neighbour lists; used for hand-built fixtures.
    pub fn from_lists(intra: [Vec<Vec<u32>>; 2], cross: [Vec<Vec<u32>>; 2]) -> Result<Self> {
        let sizes = [intra[0].len(), intra[1].len()];
        for l in 0..2 {
            if cross[l].len() != sizes[l] {
                return Err(Error::ShapeMismatch("intra and cross lists disagree on vocabulary size".into()));
            }
            for (j, list) in intra[l].iter().enumerate() {
                if list.iter().any(|&n| n as usize >= sizes[l] || n as usize == j) {
                    return Err(Error::InvalidArgument(format!("bad intra neighbour list for word {j}")));
                }
            }
            if cross[l].iter().flatten().any(|&n| n as usize >= sizes[1 - l]) {
                return Err(Error::InvalidArgument("cross neighbour out of range".into()));
            }
        }
        let k_intra = intra.iter().flatten().map(Vec::len).max().unwrap_or(0);
        let k_cross = cross.iter().flatten().map(Vec::len).max().unwrap_or(0);
        Ok(NeighborIndex { k_intra, k_cross, intra, cross })
    }
}

fn top_k(
    query: &[f64],
    candidates: &[Option<Vec<f64>>],
    exclude: Option<usize>,
    k: usize,
    min_cosine: Option<f64>,
) -> Vec<u32> {
    if k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .filter_map(|(i, c)| c.as_ref().map(|c| (dot(query, c), i)))
        .filter(|&(s, _)| min_cosine.is_none_or(|m| s >= m))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored.into_iter().map(|(_, i)| i as u32).collect()
}

/// Exact neighbour search by full cosine scan. Zero-norm words get empty
/// lists and are never candidates.
pub fn build_neighbor_index(
    emb1: &WordEmbeddingTable,
    emb2: &WordEmbeddingTable,
    config: &NeighborConfig,
) -> Result<NeighborIndex> {
    if emb1.dim() != emb2.dim() {
        return Err(Error::ShapeMismatch(format!(
            "embedding dimensions differ: {} vs {}",
            emb1.dim(),
            emb2.dim()
        )));
    }
    let units = [emb1.unit_rows(), emb2.unit_rows()];
    let mut intra: [Vec<Vec<u32>>; 2] = [Vec::new(), Vec::new()];
    let mut cross: [Vec<Vec<u32>>; 2] = [Vec::new(), Vec::new()];
    for l in 0..2 {
        for (j, q) in units[l].iter().enumerate() {
            let (ni, nc) = match q {
                Some(q) => (
                    top_k(q, &units[l], Some(j), config.k_intra, config.min_cosine),
                    top_k(q, &units[1 - l], None, config.k_cross, config.min_cosine),
                ),
                None => (Vec::new(), Vec::new()),
            };
            intra[l].push(ni);
            cross[l].push(nc);
        }
    }
    Ok(NeighborIndex { k_intra: config.k_intra, k_cross: config.k_cross, intra, cross })
}

/// How the "self" term of the augmentation sum is weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentBase {
    /// Every active word contributes 1 to itself and to each neighbour.
    #[default]
    Iverson,
    /// Every active word contributes its count to itself and to each neighbour.
    Counts,
}

/// Augmented documents over the joint vocabulary `[V1 | V2]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalBow {
    language: Language,
    n1: usize,
    n2: usize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl GlobalBow {
    pub fn language(&self) -> Language {
        self.language
    }

    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn split(&self) -> usize {
        self.n1
    }

    pub fn sparse_row(&self, d: usize) -> &[(u32, u32)] {
        &self.rows[d]
    }

    pub fn dense_row(&self, d: usize) -> Vec<u32> {
        let mut out = vec![0; self.width()];
        for &(j, c) in &self.rows[d] {
            out[j as usize] = c;
        }
        out
    }

    /// `(doc_index, col_index, value)` for every nonzero entry, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(d, r)| r.iter().map(move |&(j, c)| (d, j as usize, c)))
    }

    pub fn from_rows(language: Language, n1: usize, n2: usize, rows: Vec<Vec<(u32, u32)>>) -> Result<Self> {
        for (d, r) in rows.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::Internal(format!("augmented row {d} is all zero")));
            }
            if r.iter().any(|&(j, c)| j as usize >= n1 + n2 || c == 0) {
                return Err(Error::InvalidArgument(format!("augmented row {d} has an invalid entry")));
            }
        }
        Ok(GlobalBow { language, n1, n2, rows })
    }

    pub fn select(&self, idx: &[usize]) -> GlobalBow {
        GlobalBow {
            language: self.language,
            n1: self.n1,
            n2: self.n2,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Augments a single document given as sparse `(word, count)` pairs.
/// Returns the sparse joint-vocabulary row, sorted by column.
pub fn augment_row(
    row: &[(u32, u32)],
    language: Language,
    index: &NeighborIndex,
    base: AugmentBase,
) -> Vec<(u32, u32)> {
    let n1 = index.vocab_size(Language::L1);
    let n2 = index.vocab_size(Language::L2);
    let (own_offset, other_offset) = match language {
        Language::L1 => (0, n1),
        Language::L2 => (n1, 0),
    };
    let mut dense = vec![0u32; n1 + n2];
    for &(w, c) in row {
        let weight = match base {
            AugmentBase::Iverson => 1,
            AugmentBase::Counts => c,
        };
        let w = w as usize;
        dense[own_offset + w] += weight;
        for &n in index.intra(language, w) {
            dense[own_offset + n as usize] += weight;
        }
        for &n in index.cross(language, w) {
            dense[other_offset + n as usize] += weight;
        }
    }
    dense.into_iter().enumerate().filter(|&(_, c)| c > 0).map(|(j, c)| (j as u32, c)).collect()
}

pub fn augment(bow: &BowMatrix, index: &NeighborIndex, base: AugmentBase) -> Result<GlobalBow> {
    let lang = bow.language();
    if bow.n_words() != index.vocab_size(lang) {
        return Err(Error::ShapeMismatch(format!(
            "bag of words has {} columns but the neighbour index covers {} words",
            bow.n_words(),
            index.vocab_size(lang)
        )));
    }
    let rows = (0..bow.n_docs()).map(|d| augment_row(bow.sparse_row(d), lang, index, base)).collect();
    GlobalBow::from_rows(lang, index.vocab_size(Language::L1), index.vocab_size(Language::L2), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(lang: Language, rows: &[Vec<f64>]) -> WordEmbeddingTable {
        WordEmbeddingTable::from_vectors(lang, Matrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn nearest_intra_by_cosine() {
        let e1 = table(Language::L1, &[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]]);
        let e2 = table(Language::L2, &[vec![1.0, 0.0]]);
        let cfg = NeighborConfig { k_intra: 1, k_cross: 1, min_cosine: None };
        let idx = build_neighbor_index(&e1, &e2, &cfg).unwrap();
        assert_eq!(idx.intra(Language::L1, 0), &[1]);
        assert_eq!(idx.intra(Language::L1, 2), &[1]);
        assert_eq!(idx.cross(Language::L2, 0), &[0]);
    }

    #[test]
    fn k_zero_gives_empty_lists() {
        let e1 = table(Language::L1, &[vec![1.0, 0.0], vec![0.9, 0.1]]);
        let e2 = table(Language::L2, &[vec![1.0, 0.0]]);
        let cfg = NeighborConfig { k_intra: 0, k_cross: 0, min_cosine: None };
        let idx = build_neighbor_index(&e1, &e2, &cfg).unwrap();
        assert!(idx.intra(Language::L1, 0).is_empty());
        assert!(idx.cross(Language::L1, 1).is_empty());
    }

    #[test]
    fn zero_vectors_excluded() {
        let e1 = table(Language::L1, &[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.5]]);
        let e2 = table(Language::L2, &[vec![0.0, 0.0], vec![1.0, 0.1]]);
        let cfg = NeighborConfig { k_intra: 5, k_cross: 5, min_cosine: None };
        let idx = build_neighbor_index(&e1, &e2, &cfg).unwrap();
        assert!(idx.intra(Language::L1, 1).is_empty());
        assert!(idx.cross(Language::L1, 1).is_empty());
        assert_eq!(idx.intra(Language::L1, 0), &[2]);
        assert_eq!(idx.cross(Language::L1, 0), &[1]);
        assert!(idx.intra(Language::L2, 0).is_empty());
    }

    #[test]
    fn ties_break_by_index() {
        let e1 = table(Language::L1, &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0], vec![0.0, 1.0]]);
        let e2 = table(Language::L2, &[vec![1.0, 0.0]]);
        let cfg = NeighborConfig { k_intra: 3, k_cross: 0, min_cosine: None };
        let idx = build_neighbor_index(&e1, &e2, &cfg).unwrap();
        assert_eq!(idx.intra(Language::L1, 1), &[2, 3, 0]);
    }

    #[test]
    fn min_cosine_cutoff() {
        let e1 = table(Language::L1, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let e2 = table(Language::L2, &[vec![1.0, 0.0]]);
        let cfg = NeighborConfig { k_intra: 3, k_cross: 3, min_cosine: Some(0.5) };
        let idx = build_neighbor_index(&e1, &e2, &cfg).unwrap();
        assert!(idx.intra(Language::L1, 0).is_empty());
        assert_eq!(idx.cross(Language::L1, 0), &[0]);
        assert!(idx.cross(Language::L1, 1).is_empty());
    }

    fn football_index(intra0: Vec<u32>, intra1: Vec<u32>, cross0: Vec<u32>) -> NeighborIndex {
        NeighborIndex::from_lists(
            [vec![intra0, intra1, vec![]], vec![vec![], vec![], vec![]]],
            [vec![cross0, vec![], vec![]], vec![vec![], vec![], vec![]]],
        )
        .unwrap()
    }

    #[test]
    fn football_example() {
        // V1 = [football, goal, cat], V2 = [futbol, gol, gato]
        let idx = football_index(vec![1], vec![], vec![0]);
        let bow = BowMatrix::from_dense(Language::L1, &[vec![3, 0, 0]], vec![0]).unwrap();
        let g = augment(&bow, &idx, AugmentBase::Iverson).unwrap();
        assert_eq!(g.dense_row(0), vec![1, 1, 0, 1, 0, 0]);
    }

    #[test]
    fn mutual_neighbours_example() {
        let idx = football_index(vec![1], vec![0], vec![]);
        let bow = BowMatrix::from_dense(Language::L1, &[vec![1, 1, 0]], vec![0]).unwrap();
        let g = augment(&bow, &idx, AugmentBase::Iverson).unwrap();
        assert_eq!(g.dense_row(0), vec![2, 2, 0, 0, 0, 0]);
    }

    #[test]
    fn language_two_layout() {
        let idx = NeighborIndex::from_lists(
            [vec![vec![], vec![]], vec![vec![1], vec![]]],
            [vec![vec![], vec![]], vec![vec![1], vec![]]],
        )
        .unwrap();
        let bow = BowMatrix::from_dense(Language::L2, &[vec![2, 0]], vec![0]).unwrap();
        let g = augment(&bow, &idx, AugmentBase::Iverson).unwrap();
        assert_eq!(g.dense_row(0), vec![0, 1, 1, 1]);
        let g = augment(&bow, &idx, AugmentBase::Counts).unwrap();
        assert_eq!(g.dense_row(0), vec![0, 2, 2, 2]);
    }

    #[test]
    fn no_neighbours_binarizes() {
        let idx = football_index(vec![], vec![], vec![]);
        let bow = BowMatrix::from_dense(Language::L1, &[vec![5, 0, 2]], vec![0]).unwrap();
        let g = augment(&bow, &idx, AugmentBase::Iverson).unwrap();
        assert_eq!(g.dense_row(0), vec![1, 0, 1, 0, 0, 0]);
        let trips: Vec<_> = g.triplets().collect();
        assert_eq!(trips, vec![(0, 0, 1), (0, 2, 1)]);
    }

    #[test]
    fn coverage_ratio() {
        let t = WordEmbeddingTable::new(Language::L1, Matrix::zeros(3, 2), vec![false, true, false]).unwrap();
        assert!((t.coverage() - 2.0 / 3.0).abs() < 1e-15);
    }
}
