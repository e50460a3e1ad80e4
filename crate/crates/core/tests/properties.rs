use gloctm_core::corpus::{build_vocabulary, vectorize, BowMatrix};
use gloctm_core::lexicon::{augment, build_neighbor_index, AugmentBase, NeighborConfig, WordEmbeddingTable};
use gloctm_core::linalg::Matrix;
use gloctm_core::Language;
use proptest::prelude::*;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

fn brute_neighbors(q: &[f64], pool: &[Vec<f64>], skip: Option<usize>, k: usize) -> Vec<usize> {
    if q.iter().all(|x| *x == 0.0) {
        return Vec::new();
    }
    let mut c: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(j, v)| Some(*j) != skip && v.iter().any(|x| *x != 0.0))
        .map(|(j, v)| (cosine(q, v), j))
        .collect();
    c.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    c.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Direct evaluation of the augmented row, dense over `[V1 | V2]`.
fn brute_augment(doc: &[u32], lang: usize, emb: &[Vec<Vec<f64>>; 2], ki: usize, kc: usize, counts: bool) -> Vec<u32> {
    let n = [emb[0].len(), emb[1].len()];
    let offset = |l: usize| if l == 0 { 0 } else { n[0] };
    let mut out = vec![0u32; n[0] + n[1]];
    let other = 1 - lang;
    for (w, &c) in doc.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let weight = if counts { c } else { 1 };
        let intra = brute_neighbors(&emb[lang][w], &emb[lang], Some(w), ki);
        let cross = brute_neighbors(&emb[lang][w], &emb[other], None, kc);
        for j in 0..n[lang] {
            let hit = (j == w) as u32 + intra.contains(&j) as u32;
            out[offset(lang) + j] += weight * hit;
        }
        for j in 0..n[other] {
            out[offset(other) + j] += weight * cross.contains(&j) as u32;
        }
    }
    out
}

fn vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n)
}

prop_compose! {
    fn case()(n1 in 1usize..8, n2 in 1usize..8, dim in 1usize..4)
        (e1 in vectors(n1, dim), e2 in vectors(n2, dim),
         d1 in prop::collection::vec(prop::collection::vec(0u32..3, n1), 1..4),
         d2 in prop::collection::vec(prop::collection::vec(0u32..3, n2), 1..4),
         ki in 0usize..4, kc in 0usize..4, counts in any::<bool>())
        -> ([Vec<Vec<f64>>; 2], [Vec<Vec<u32>>; 2], usize, usize, bool) {
        ([e1, e2], [d1, d2], ki, kc, counts)
    }
}

proptest! {
    #[test]
    fn augment_matches_brute_force((emb, docs, ki, kc, counts) in case()) {
        let tables = [
            WordEmbeddingTable::from_vectors(Language::L1, Matrix::from_rows(&emb[0])).unwrap(),
            WordEmbeddingTable::from_vectors(Language::L2, Matrix::from_rows(&emb[1])).unwrap(),
        ];
        let cfg = NeighborConfig { k_intra: ki, k_cross: kc, min_cosine: None };
        let index = build_neighbor_index(&tables[0], &tables[1], &cfg).unwrap();
        let base = if counts { AugmentBase::Counts } else { AugmentBase::Iverson };
        for lang in Language::BOTH {
            let l = lang.index();
            let nonempty: Vec<Vec<u32>> = docs[l].iter().filter(|d| d.iter().any(|c| *c > 0)).cloned().collect();
            if nonempty.is_empty() {
                continue;
            }
            let bow = BowMatrix::from_dense(lang, &nonempty, (0..nonempty.len()).collect()).unwrap();
            let g = augment(&bow, &index, base).unwrap();
            prop_assert_eq!(g.width(), emb[0].len() + emb[1].len());
            for (d, doc) in nonempty.iter().enumerate() {
                prop_assert_eq!(g.dense_row(d), brute_augment(doc, l, &emb, ki, kc, counts));
            }
        }
    }

    #[test]
    fn augmented_mass_grows_with_k((emb, docs, ki, kc, _c) in case()) {
        let tables = [
            WordEmbeddingTable::from_vectors(Language::L1, Matrix::from_rows(&emb[0])).unwrap(),
            WordEmbeddingTable::from_vectors(Language::L2, Matrix::from_rows(&emb[1])).unwrap(),
        ];
        let doc: Vec<Vec<u32>> = docs[0].iter().filter(|d| d.iter().any(|c| *c > 0)).cloned().collect();
        prop_assume!(!doc.is_empty());
        let bow = BowMatrix::from_dense(Language::L1, &doc, (0..doc.len()).collect()).unwrap();
        let total = |ki, kc| {
            let cfg = NeighborConfig { k_intra: ki, k_cross: kc, min_cosine: None };
            let index = build_neighbor_index(&tables[0], &tables[1], &cfg).unwrap();
            let g = augment(&bow, &index, AugmentBase::Iverson).unwrap();
            (0..g.n_docs()).map(|d| g.dense_row(d)).collect::<Vec<_>>()
        };
        let small = total(ki, kc);
        let big = total(ki + 1, kc + 1);
        for (a, b) in small.iter().zip(&big) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!(x <= y);
            }
        }
    }

    #[test]
    fn own_block_sits_in_language_slot((emb, docs, ki, kc, _c) in case()) {
        let tables = [
            WordEmbeddingTable::from_vectors(Language::L1, Matrix::from_rows(&emb[0])).unwrap(),
            WordEmbeddingTable::from_vectors(Language::L2, Matrix::from_rows(&emb[1])).unwrap(),
        ];
        let cfg = NeighborConfig { k_intra: ki, k_cross: kc, min_cosine: None };
        let index = build_neighbor_index(&tables[0], &tables[1], &cfg).unwrap();
        let n1 = emb[0].len();
        for lang in Language::BOTH {
            let l = lang.index();
            let nonempty: Vec<Vec<u32>> = docs[l].iter().filter(|d| d.iter().any(|c| *c > 0)).cloned().collect();
            if nonempty.is_empty() {
                continue;
            }
            let bow = BowMatrix::from_dense(lang, &nonempty, (0..nonempty.len()).collect()).unwrap();
            let g = augment(&bow, &index, AugmentBase::Iverson).unwrap();
            prop_assert_eq!(g.split(), n1);
            for (d, doc) in nonempty.iter().enumerate() {
                let row = g.dense_row(d);
                let own = if l == 0 { &row[..n1] } else { &row[n1..] };
                for (w, &c) in doc.iter().enumerate() {
                    if c > 0 {
                        prop_assert!(own[w] >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn vocabulary_ignores_document_order(
        docs in prop::collection::vec(prop::collection::vec(0u8..12, 0..10), 1..12),
        min_df in 1usize..3,
        max_vocab in 1usize..15,
        rot in 0usize..12,
    ) {
        let words: Vec<Vec<String>> = docs.iter().map(|d| d.iter().map(|w| format!("w{w}")).collect()).collect();
        let mut shuffled = words.clone();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        shuffled.reverse();
        let a = build_vocabulary(&words, Language::L1, min_df, max_vocab);
        let b = build_vocabulary(&shuffled, Language::L1, min_df, max_vocab);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.tokens(), b.tokens()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one order built a vocabulary and the other did not"),
        }
    }

    #[test]
    fn vectorized_rows_count_in_vocabulary_tokens(
        docs in prop::collection::vec(prop::collection::vec(0u8..12, 0..10), 1..12),
    ) {
        let words: Vec<Vec<String>> = docs.iter().map(|d| d.iter().map(|w| format!("w{w}")).collect()).collect();
        let Ok(vocab) = build_vocabulary(&words, Language::L2, 2, 6) else { return Ok(()) };
        let v = vectorize(&words, &vocab);
        prop_assert_eq!(v.bow.n_docs() + v.dropped.len(), words.len());
        for d in 0..v.bow.n_docs() {
            let src = &words[v.bow.doc_ids()[d]];
            let expected = src.iter().filter(|t| vocab.get(t).is_some()).count() as u64;
            prop_assert_eq!(v.bow.row_total(d), expected);
        }
    }
}
