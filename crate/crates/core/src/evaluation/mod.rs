//! Topic quality metrics, transfer classification and planted-topic matching.

mod assignment;
mod svm;

pub use assignment::hungarian_min;
pub use svm::{classify, LinearSvm, SvmConfig};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedReference, Vocabulary};
use crate::linalg::Matrix;
use crate::model::{top_indices, ModelParams};
use crate::synthgen::PlantedTruth;
use crate::{Error, Language, Result};

/// Number of top words per topic used by the metrics unless configured otherwise.
pub const DEFAULT_TOP_WORDS: usize = 15;

/// Top-word indices of each topic in both languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSet {
    pub top_n: usize,
    /// `topics[k] = [language-1 word indices, language-2 word indices]`.
    pub topics: Vec<[Vec<usize>; 2]>,
}

impl TopicSet {
    pub fn new(top_n: usize, topics: Vec<[Vec<usize>; 2]>) -> Result<Self> {
        if let Some(k) = topics.iter().position(|t| t[0].len() != top_n || t[1].len() != top_n) {
            return Err(Error::InvalidArgument(format!("topic {k} does not have {top_n} words per language")));
        }
        Ok(TopicSet { top_n, topics })
    }

    /// Reads the `top_n` largest logits of every row of `β1` and `β2`.
    pub fn from_params(params: &ModelParams, top_n: usize) -> Result<Self> {
        let topics = (0..params.n_topics())
            .map(|k| Ok([top_indices(params.beta1.row(k), top_n)?, top_indices(params.beta2.row(k), top_n)?]))
            .collect::<Result<Vec<_>>>()?;
        Ok(TopicSet { top_n, topics })
    }

    /// Maps word lists to indices; every word must be in its vocabulary.
    pub fn from_words(lists: &[[Vec<String>; 2]], vocabs: [&Vocabulary; 2]) -> Result<Self> {
        let top_n = lists.first().map_or(0, |t| t[0].len());
        let mut topics = Vec::with_capacity(lists.len());
        for t in lists {
            let mut pair: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for l in 0..2 {
                for w in &t[l] {
                    let j = vocabs[l]
                        .get(w)
                        .ok_or_else(|| Error::InvalidArgument(format!("{w:?} is not in the {} vocabulary", Language::BOTH[l])))?;
                    pair[l].push(j);
                }
            }
            topics.push(pair);
        }
        TopicSet::new(top_n, topics)
    }

    pub fn n_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn words(&self, vocabs: [&Vocabulary; 2]) -> Vec<[Vec<String>; 2]> {
        self.topics
            .iter()
            .map(|t| [0, 1].map(|l| t[l].iter().map(|&j| String::from(vocabs[l].word(j))).collect()))
            .collect()
    }
}

/// NPMI of one cross-lingual word pair under the aligned-reference counts.
fn npmi(df1: usize, df2: usize, co: usize, n: usize) -> f64 {
    if df1 == 0 || df2 == 0 {
        return 0.0;
    }
    if co == 0 {
        return -1.0;
    }
    if co == n {
        // log 1 / log 1
        return 0.0;
    }
    let n = n as f64;
    let (p1, p2, p12) = (df1 as f64 / n, df2 as f64 / n, co as f64 / n);
    libm::log(p12 / (p1 * p2)) / -libm::log(p12)
}

/// Cross-lingual NPMI of every topic, averaged over its `T × T` word pairs.
pub fn cnpmi_per_topic(topics: &TopicSet, reference: &AlignedReference) -> Result<Vec<f64>> {
    let n = reference.len();
    if n == 0 {
        return Err(Error::InvalidArgument("aligned reference is empty".into()));
    }
    let mut per_topic = Vec::with_capacity(topics.n_topics());
    for t in &topics.topics {
        // which reference pairs contain each top word
        let occ = |side: usize, w: usize| -> Vec<bool> {
            reference.pairs().iter().map(|p| if side == 0 { p.0.contains(&w) } else { p.1.contains(&w) }).collect()
        };
        let occ1: Vec<Vec<bool>> = t[0].iter().map(|&w| occ(0, w)).collect();
        let occ2: Vec<Vec<bool>> = t[1].iter().map(|&w| occ(1, w)).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for a in &occ1 {
            let df1 = a.iter().filter(|&&x| x).count();
            for b in &occ2 {
                let df2 = b.iter().filter(|&&x| x).count();
                let co = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
                total += npmi(df1, df2, co, n);
                count += 1;
            }
        }
        per_topic.push(if count == 0 { 0.0 } else { total / count as f64 });
    }
    Ok(per_topic)
}

pub fn cnpmi(topics: &TopicSet, reference: &AlignedReference) -> Result<f64> {
    let per = cnpmi_per_topic(topics, reference)?;
    Ok(mean(&per))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuMode {
    /// Repetition counted within each language's lists.
    #[default]
    PerLanguage,
    /// Repetition counted over both languages' lists together, matching words by string.
    Pooled,
}

/// Topic uniqueness: the mean over every listed word of `1 / cnt(w)`, where
/// `cnt(w)` is the number of topics listing `w`.
pub fn topic_uniqueness(topics: &TopicSet) -> f64 {
    let k = topics.n_topics();
    if k == 0 || topics.top_n == 0 {
        return 0.0;
    }
    let mut counts: [BTreeMap<usize, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for t in &topics.topics {
        for l in 0..2 {
            for &w in t[l].iter().collect::<BTreeSet<_>>() {
                *counts[l].entry(w).or_insert(0) += 1;
            }
        }
    }
    let mut total = 0.0;
    for t in &topics.topics {
        for l in 0..2 {
            total += t[l].iter().map(|w| 1.0 / counts[l][w] as f64).sum::<f64>();
        }
    }
    total / (k as f64 * 2.0 * topics.top_n as f64)
}

/// Topic uniqueness over word strings, with the counting scope selected by `mode`.
pub fn topic_uniqueness_words(lists: &[[Vec<String>; 2]], mode: TuMode) -> f64 {
    let k = lists.len();
    let t = lists.first().map_or(0, |x| x[0].len());
    if k == 0 || t == 0 {
        return 0.0;
    }
    let scope = |l: usize| match mode {
        TuMode::PerLanguage => l,
        TuMode::Pooled => 0,
    };
    let mut counts: [BTreeMap<&str, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for topic in lists {
        let mut seen: [BTreeSet<&str>; 2] = [BTreeSet::new(), BTreeSet::new()];
        for l in 0..2 {
            for w in &topic[l] {
                seen[scope(l)].insert(w.as_str());
            }
        }
        for s in 0..2 {
            for w in &seen[s] {
                *counts[s].entry(w).or_insert(0) += 1;
            }
        }
    }
    let mut total = 0.0;
    for topic in lists {
        for l in 0..2 {
            total += topic[l].iter().map(|w| 1.0 / counts[scope(l)][w.as_str()] as f64).sum::<f64>();
        }
    }
    total / (k as f64 * 2.0 * t as f64)
}

/// `max(cnpmi, 0) · tu`.
pub fn topic_quality(cnpmi: f64, tu: f64) -> f64 {
    cnpmi.max(0.0) * tu
}

/// Accuracies of intra-lingual (`*_intra`) and cross-lingual (`*_cross`)
/// classification, named by the language of the test documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub l1_intra: f64,
    pub l2_intra: f64,
    /// Trained on language 2, tested on language 1.
    pub l1_cross: f64,
    /// Trained on language 1, tested on language 2.
    pub l2_cross: f64,
}

impl ClassificationScores {
    pub fn mean_intra(&self) -> f64 {
        0.5 * (self.l1_intra + self.l2_intra)
    }

    pub fn mean_cross(&self) -> f64 {
        0.5 * (self.l1_cross + self.l2_cross)
    }
}

/// Train/test topic features and labels for one language.
#[derive(Debug, Clone)]
pub struct LabeledFeatures {
    pub train: Matrix,
    pub train_labels: Vec<usize>,
    pub test: Matrix,
    pub test_labels: Vec<usize>,
}

pub fn classification_scores(data: [&LabeledFeatures; 2], config: &SvmConfig) -> Result<ClassificationScores> {
    let [a, b] = data;
    Ok(ClassificationScores {
        l1_intra: classify(&a.train, &a.train_labels, &a.test, &a.test_labels, config)?,
        l2_intra: classify(&b.train, &b.train_labels, &b.test, &b.test_labels, config)?,
        l1_cross: classify(&b.train, &b.train_labels, &a.test, &a.test_labels, config)?,
        l2_cross: classify(&a.train, &a.train_labels, &b.test, &b.test_labels, config)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cnpmi: f64,
    pub tu: f64,
    pub tq: f64,
    pub per_topic_cnpmi: Vec<f64>,
    pub classification: Option<ClassificationScores>,
    pub alignment_accuracy: Option<f64>,
}

impl MetricReport {
    pub fn new(per_topic_cnpmi: Vec<f64>, tu: f64) -> Self {
        let cnpmi = mean(&per_topic_cnpmi);
        MetricReport { cnpmi, tu, tq: topic_quality(cnpmi, tu), per_topic_cnpmi, classification: None, alignment_accuracy: None }
    }
}

/// Result of matching learned topics to planted ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMatch {
    /// Planted topic assigned to each learned topic from its language-1 list.
    pub l1_assignment: Vec<Option<usize>>,
    /// Same, from its language-2 list mapped through the translation.
    pub l2_assignment: Vec<Option<usize>>,
    /// One-to-one assignment maximising the overlap of both lists together.
    pub joint_assignment: Vec<Option<usize>>,
    /// Fraction of learned topics whose two lists are assigned the same planted topic.
    pub alignment_accuracy: f64,
}

fn maximize(overlap: &[Vec<usize>], n_planted: usize) -> Vec<Option<usize>> {
    let max = overlap.iter().flatten().copied().max().unwrap_or(0) as f64;
    let cost = Matrix::from_fn(overlap.len(), n_planted, |i, j| max - overlap[i][j] as f64);
    hungarian_min(&cost)
}

pub fn match_planted_topics(
    topics: &TopicSet,
    vocabs: [&Vocabulary; 2],
    planted: &PlantedTruth,
) -> Result<PlantedMatch> {
    let n_planted = planted.n_topics();
    if n_planted == 0 {
        return Err(Error::InvalidArgument("no planted topics".into()));
    }
    let to_l1: BTreeMap<&str, &str> = planted.translation.iter().map(|(a, b)| (b.as_str(), a.as_str())).collect();
    let sets: Vec<BTreeSet<&str>> = planted.topics[0].iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    let words = topics.words(vocabs);
    let overlap = |l: usize| -> Vec<Vec<usize>> {
        words
            .iter()
            .map(|t| {
                let mapped: Vec<&str> = if l == 0 {
                    t[0].iter().map(String::as_str).collect()
                } else {
                    t[1].iter().filter_map(|w| to_l1.get(w.as_str()).copied()).collect()
                };
                sets.iter().map(|s| mapped.iter().filter(|w| s.contains(*w)).count()).collect()
            })
            .collect()
    };
    let o1 = overlap(0);
    let o2 = overlap(1);
    let joint: Vec<Vec<usize>> = o1.iter().zip(&o2).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
    let l1_assignment = maximize(&o1, n_planted);
    let l2_assignment = maximize(&o2, n_planted);
    let joint_assignment = maximize(&joint, n_planted);
    let agree = l1_assignment.iter().zip(&l2_assignment).filter(|(a, b)| a.is_some() && a == b).count();
    let alignment_accuracy = if topics.n_topics() == 0 { 0.0 } else { agree as f64 / topics.n_topics() as f64 };
    Ok(PlantedMatch { l1_assignment, l2_assignment, joint_assignment, alignment_accuracy })
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation (0 for fewer than two values).
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64)
}

/// Deterministic train/test split: every `1/test_fraction`-th document
/// (by position) is held out.
pub fn holdout_split(n: usize, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let stride = if test_fraction > 0.0 { libm::round(1.0 / test_fraction).max(1.0) as usize } else { usize::MAX };
    for i in 0..n {
        if stride != usize::MAX && i % stride == stride - 1 {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests;
