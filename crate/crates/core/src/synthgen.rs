//! Bilingual corpora with planted shared topics.
//!
//! Topic `t` owns `words_per_topic` words in each language (`e_t3_w7` and its
//! translation `f_t3_w7`). Documents draw topic proportions from a symmetric
//! Dirichlet and tokens from the uniform distribution over the chosen
//! topic's words, with a fraction of tokens replaced by uniformly random
//! vocabulary words. Word embeddings put every word at its topic's axis plus
//! jitter shared by the translation pair; document embeddings are a fixed
//! random projection of the true proportions plus noise, identical across
//! languages.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Language, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub docs_per_lang: usize,
    pub doc_length: usize,
    /// Dirichlet concentration of the document-topic draws.
    pub topic_sparsity: f64,
    /// Probability that a token is drawn uniformly from the whole vocabulary.
    pub noise_rate: f64,
    /// Number of aligned document pairs in the reference corpus.
    pub reference_docs: usize,
    /// Standard deviation of the word-embedding jitter.
    pub word_jitter: f64,
    pub doc_embedding_dim: usize,
    pub doc_embedding_noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_topics: 5,
            words_per_topic: 40,
            docs_per_lang: 2000,
            doc_length: 60,
            topic_sparsity: 0.1,
            noise_rate: 0.1,
            reference_docs: 1000,
            word_jitter: 0.1,
            doc_embedding_dim: 16,
            doc_embedding_noise: 0.05,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("planted spec: {m}")));
        if self.n_topics == 0 {
            return bad("n_topics must be positive");
        }
        if self.words_per_topic == 0 {
            return bad("words_per_topic must be positive");
        }
        if self.docs_per_lang == 0 {
            return bad("docs_per_lang must be positive");
        }
        if self.doc_length == 0 {
            return bad("doc_length must be positive");
        }
        if !(self.topic_sparsity > 0.0) {
            return bad("topic_sparsity must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad("noise_rate must lie in [0, 1]");
        }
        if self.reference_docs == 0 {
            return bad("reference_docs must be positive");
        }
        if !(self.word_jitter >= 0.0 && self.doc_embedding_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if self.doc_embedding_dim == 0 {
            return bad("doc_embedding_dim must be positive");
        }
        Ok(())
    }

    pub fn word(&self, lang: Language, topic: usize, i: usize) -> String {
        let prefix = match lang {
            Language::L1 => 'e',
            Language::L2 => 'f',
        };
        format!("{prefix}_t{topic}_w{i}")
    }
}

/// Ground truth: the planted word sets of each language and the
/// index-preserving translation between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// `topics[lang][t]`: words of planted topic `t`.
    pub topics: [Vec<Vec<String>>; 2],
    /// `(language-1 word, language-2 word)` pairs.
    pub translation: Vec<(String, String)>,
}

impl PlantedTruth {
    pub fn n_topics(&self) -> usize {
        self.topics[0].len()
    }

    pub fn translate(&self, l1_word: &str) -> Option<&str> {
        self.translation.iter().find(|(a, _)| a == l1_word).map(|(_, b)| b.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub docs: [Vec<Vec<String>>; 2],
    /// `argmax θ` of each document.
    pub labels: [Vec<usize>; 2],
    pub theta: [Vec<Vec<f64>>; 2],
    pub truth: PlantedTruth,
    /// `(word, vector)` rows in planted order.
    pub word_embeddings: [Vec<(String, Vec<f64>)>; 2],
    pub doc_embeddings: [Matrix; 2],
    /// `reference[lang][i]`: side `lang` of aligned pair `i`.
    pub reference: [Vec<Vec<String>>; 2],
}

fn draw_theta<R: Rng>(k: usize, gamma: &Gamma<f64>, rng: &mut R) -> Vec<f64> {
    let mut th: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = th.iter().sum();
    if s > 0.0 && s.is_finite() {
        for x in &mut th {
            *x /= s;
        }
    } else {
        th = vec![0.0; k];
        th[rng.random_range(0..k)] = 1.0;
    }
    th
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct DocSampler<'a> {
    spec: &'a PlantedSpec,
    words: &'a [Vec<Vec<String>>; 2],
}

impl DocSampler<'_> {
    fn doc<R: Rng>(&self, lang: Language, theta: &[f64], rng: &mut R) -> Vec<String> {
        let s = self.spec;
        let vocab = s.n_topics * s.words_per_topic;
        (0..s.doc_length)
            .map(|_| {
                let flat = if rng.random::<f64>() < s.noise_rate {
                    rng.random_range(0..vocab)
                } else {
                    let t = sample_index(theta, rng);
                    t * s.words_per_topic + rng.random_range(0..s.words_per_topic)
                };
                let (t, i) = (flat / s.words_per_topic, flat % s.words_per_topic);
                self.words[lang.index()][t][i].clone()
            })
            .collect()
    }
}

pub fn generate(spec: &PlantedSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, w) = (spec.n_topics, spec.words_per_topic);
    let words: [Vec<Vec<String>>; 2] =
        Language::BOTH.map(|l| (0..k).map(|t| (0..w).map(|i| spec.word(l, t, i)).collect()).collect());
    let translation = (0..k)
        .flat_map(|t| (0..w).map(move |i| (t, i)))
        .map(|(t, i)| (words[0][t][i].clone(), words[1][t][i].clone()))
        .collect();

    let gamma = Gamma::new(spec.topic_sparsity, 1.0).map_err(|e| Error::Config(format!("{e}")))?;
    let sampler = DocSampler { spec, words: &words };
    let projection = Matrix::from_fn(k, spec.doc_embedding_dim, |_, _| rng.sample(StandardNormal));
    let doc_noise = Normal::new(0.0, spec.doc_embedding_noise).map_err(|e| Error::Config(format!("{e}")))?;

    let mut docs: [Vec<Vec<String>>; 2] = [Vec::new(), Vec::new()];
    let mut labels: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut thetas: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut doc_embeddings = [Matrix::zeros(0, 0), Matrix::zeros(0, 0)];
    for lang in Language::BOTH {
        let l = lang.index();
        let mut emb = Matrix::zeros(spec.docs_per_lang, spec.doc_embedding_dim);
        for d in 0..spec.docs_per_lang {
            let th = draw_theta(k, &gamma, &mut rng);
            docs[l].push(sampler.doc(lang, &th, &mut rng));
            labels[l].push(argmax(&th));
            for (m, out) in emb.row_mut(d).iter_mut().enumerate() {
                let clean: f64 = (0..k).map(|t| th[t] * projection.get(t, m)).sum();
                *out = clean + doc_noise.sample(&mut rng);
            }
            thetas[l].push(th);
        }
        doc_embeddings[l] = emb;
    }

    let mut reference: [Vec<Vec<String>>; 2] = [Vec::new(), Vec::new()];
    for _ in 0..spec.reference_docs {
        let th = draw_theta(k, &gamma, &mut rng);
        for lang in Language::BOTH {
            reference[lang.index()].push(sampler.doc(lang, &th, &mut rng));
        }
    }

    let jitter = Normal::new(0.0, spec.word_jitter).map_err(|e| Error::Config(format!("{e}")))?;
    let mut word_embeddings: [Vec<(String, Vec<f64>)>; 2] = [Vec::new(), Vec::new()];
    for t in 0..k {
        for i in 0..w {
            let mut v: Vec<f64> = (0..k).map(|_| jitter.sample(&mut rng)).collect();
            v[t] += 1.0;
            for lang in Language::BOTH {
                word_embeddings[lang.index()].push((words[lang.index()][t][i].clone(), v.clone()));
            }
        }
    }

    Ok(SyntheticCorpus {
        docs,
        labels,
        theta: thetas,
        truth: PlantedTruth { topics: words, translation },
        word_embeddings,
        doc_embeddings,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::{BTreeMap, BTreeSet};

    fn small() -> PlantedSpec {
        PlantedSpec { n_topics: 3, words_per_topic: 5, docs_per_lang: 60, doc_length: 20, reference_docs: 30, ..PlantedSpec::default() }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&PlantedSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.docs, c.docs);
    }

    #[test]
    fn translation_maps_topic_sets() {
        let s = generate(&small()).unwrap();
        for t in 0..3 {
            let mapped: BTreeSet<&str> = s.truth.topics[0][t].iter().map(|w| s.truth.translate(w).unwrap()).collect();
            let target: BTreeSet<&str> = s.truth.topics[1][t].iter().map(String::as_str).collect();
            assert_eq!(mapped, target);
        }
        let all1: BTreeSet<&String> = s.truth.topics[0].iter().flatten().collect();
        assert!(s.truth.topics[1].iter().flatten().all(|w| !all1.contains(w)));
    }

    #[test]
    fn shapes_and_labels() {
        let spec = small();
        let s = generate(&spec).unwrap();
        for l in 0..2 {
            assert_eq!(s.docs[l].len(), 60);
            assert!(s.docs[l].iter().all(|d| d.len() == 20));
            assert_eq!(s.doc_embeddings[l].shape(), (60, spec.doc_embedding_dim));
            for (th, &lab) in s.theta[l].iter().zip(&s.labels[l]) {
                assert!((th.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(lab, argmax(th));
            }
            assert_eq!(s.reference[l].len(), 30);
            assert_eq!(s.word_embeddings[l].len(), 15);
        }
    }

    #[test]
    fn word_frequencies_converge_to_mixture() {
        let spec = PlantedSpec { noise_rate: 0.0, doc_length: 40_000, docs_per_lang: 3, reference_docs: 1, ..small() };
        let s = generate(&spec).unwrap();
        for d in 0..3 {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for w in &s.docs[0][d] {
                *counts.entry(w.as_str()).or_insert(0) += 1;
            }
            for t in 0..3 {
                for w in &s.truth.topics[0][t] {
                    let want = s.theta[0][d][t] / 5.0;
                    let got = *counts.get(w.as_str()).unwrap_or(&0) as f64 / 40_000.0;
                    assert!((got - want).abs() < 0.01, "doc {d} word {w}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn noiseless_cooccurrence_recovers_planted_clusters() {
        let spec = PlantedSpec { noise_rate: 0.0, topic_sparsity: 0.05, docs_per_lang: 400, ..small() };
        let s = generate(&spec).unwrap();
        let words: Vec<&String> = s.truth.topics[0].iter().flatten().collect();
        let n = words.len();
        let pos: BTreeMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let mut cooc = Matrix::zeros(n, n);
        for doc in &s.docs[0] {
            let present: BTreeSet<usize> = doc.iter().map(|w| pos[w.as_str()]).collect();
            for &a in &present {
                for &b in &present {
                    cooc.set(a, b, cooc.get(a, b) + 1.0);
                }
            }
        }
        // single-linkage on cosine of co-occurrence profiles
        let unit: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let r = cooc.row(i);
                let nr = crate::linalg::norm(r);
                r.iter().map(|x| x / nr).collect()
            })
            .collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for a in 0..n {
            for b in a + 1..n {
                if crate::linalg::dot(&unit[a], &unit[b]) > 0.8 {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
        let clusters: BTreeSet<BTreeSet<usize>> = (0..n)
            .map(|i| {
                let r = find(&mut parent, i);
                (0..n).filter(|&j| find(&mut parent, j) == r).collect()
            })
            .collect();
        let planted: BTreeSet<BTreeSet<usize>> = (0..3).map(|t| (t * 5..(t + 1) * 5).collect()).collect();
        assert_eq!(clusters, planted);
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(generate(&PlantedSpec { doc_length: 0, ..small() }).is_err());
        assert!(generate(&PlantedSpec { noise_rate: 1.5, ..small() }).is_err());
    }
}
