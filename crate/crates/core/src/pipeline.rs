//! End-to-end glue: raw token lists to training inputs, and trained
//! parameters to a metric report.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, vectorize, AlignedReference, BowMatrix, Vocabulary};
use crate::evaluation::{
    classification_scores, cnpmi_per_topic, holdout_split, match_planted_topics, topic_uniqueness, topic_uniqueness_words, LabeledFeatures, TuMode,
    MetricReport, SvmConfig, TopicSet, DEFAULT_TOP_WORDS,
};
use crate::lexicon::{augment, build_neighbor_index, AugmentBase, DocEmbeddingTable, GlobalBow, NeighborConfig, WordEmbeddingTable};
use crate::linalg::Matrix;
use crate::model::{infer_theta, CountBatch, ModelParams, Pathway};
use crate::synthgen::{PlantedTruth, SyntheticCorpus};
use crate::training::TrainingData;
use crate::{Error, Language, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_df: usize,
    pub max_vocab: usize,
    pub augment_base: AugmentBase,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { min_df: 3, max_vocab: 5000, augment_base: AugmentBase::Iverson }
    }
}

/// Per-language inputs, indexed by input document position.
#[derive(Debug, Clone, Copy)]
pub struct RawLanguage<'a> {
    pub docs: &'a [Vec<String>],
    pub word_embeddings: &'a [(String, Vec<f64>)],
    pub doc_embeddings: Option<&'a Matrix>,
    pub labels: Option<&'a [usize]>,
}

/// Vectorised corpus ready for training and evaluation. Rows dropped by
/// vectorisation are dropped from embeddings and labels too.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocabs: [Vocabulary; 2],
    pub bows: [BowMatrix; 2],
    pub globals: [GlobalBow; 2],
    pub word_embeddings: [WordEmbeddingTable; 2],
    pub doc_embeddings: [Option<DocEmbeddingTable>; 2],
    pub labels: [Option<Vec<usize>>; 2],
    pub reference: Option<AlignedReference>,
}

impl PreparedCorpus {
    pub fn training_data(&self) -> TrainingData<'_> {
        TrainingData {
            bows: [&self.bows[0], &self.bows[1]],
            globals: [&self.globals[0], &self.globals[1]],
            doc_embeddings: [self.doc_embeddings[0].as_ref(), self.doc_embeddings[1].as_ref()],
        }
    }

    pub fn vocab_refs(&self) -> [&Vocabulary; 2] {
        [&self.vocabs[0], &self.vocabs[1]]
    }
}

pub fn prepare(
    raw: [RawLanguage<'_>; 2],
    reference: Option<[&[Vec<String>]; 2]>,
    neighbors: &NeighborConfig,
    config: &PreprocessConfig,
) -> Result<PreparedCorpus> {
    let mut vocabs = Vec::with_capacity(2);
    let mut bows = Vec::with_capacity(2);
    let mut word_embeddings = Vec::with_capacity(2);
    let mut doc_embeddings = Vec::with_capacity(2);
    let mut labels = Vec::with_capacity(2);
    for lang in Language::BOTH {
        let r = raw[lang.index()];
        if let Some(l) = r.labels {
            if l.len() != r.docs.len() {
                return Err(Error::ShapeMismatch(format!("{lang}: label count mismatch")));
            }
        }
        if let Some(e) = r.doc_embeddings {
            if e.rows() != r.docs.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{lang}: {} document embeddings for {} documents",
                    e.rows(),
                    r.docs.len()
                )));
            }
        }
        let vocab = build_vocabulary(r.docs, lang, config.min_df, config.max_vocab)?;
        let v = vectorize(r.docs, &vocab);
        let kept = v.bow.doc_ids().to_vec();
        word_embeddings.push(WordEmbeddingTable::align(&vocab, r.word_embeddings.iter().map(|(w, e)| (w, e.clone())))?);
        doc_embeddings.push(match r.doc_embeddings {
            Some(e) => Some(DocEmbeddingTable::new(lang, e.select_rows(&kept))?),
            None => None,
        });
        labels.push(r.labels.map(|l| kept.iter().map(|&d| l[d]).collect::<Vec<usize>>()));
        vocabs.push(vocab);
        bows.push(v.bow);
    }
    let index = build_neighbor_index(&word_embeddings[0], &word_embeddings[1], neighbors)?;
    let globals = [augment(&bows[0], &index, config.augment_base)?, augment(&bows[1], &index, config.augment_base)?];
    let reference = match reference {
        Some([a, b]) => Some(AlignedReference::from_token_pairs(a, b, &vocabs[0], &vocabs[1])?),
        None => None,
    };
    Ok(PreparedCorpus {
        vocabs: two(vocabs),
        bows: two(bows),
        globals,
        word_embeddings: two(word_embeddings),
        doc_embeddings: two(doc_embeddings),
        labels: two(labels),
        reference,
    })
}

fn two<T>(v: Vec<T>) -> [T; 2] {
    v.try_into().unwrap_or_else(|_| unreachable!("one entry per language"))
}

pub fn prepare_synthetic(
    corpus: &SyntheticCorpus,
    neighbors: &NeighborConfig,
    config: &PreprocessConfig,
) -> Result<PreparedCorpus> {
    let raw = Language::BOTH.map(|l| {
        let i = l.index();
        RawLanguage {
            docs: &corpus.docs[i],
            word_embeddings: &corpus.word_embeddings[i],
            doc_embeddings: Some(&corpus.doc_embeddings[i]),
            labels: Some(&corpus.labels[i]),
        }
    });
    prepare(raw, Some([&corpus.reference[0], &corpus.reference[1]]), neighbors, config)
}

/// Which encoder supplies classification features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    #[default]
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub top_n: usize,
    pub test_fraction: f64,
    pub theta_source: ThetaSource,
    pub tu_mode: TuMode,
    pub svm: SvmConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { top_n: DEFAULT_TOP_WORDS, test_fraction: 0.2, theta_source: ThetaSource::Local, tu_mode: TuMode::PerLanguage, svm: SvmConfig::default() }
    }
}

/// Evaluation-mode θ of every document of one language.
pub fn document_theta(params: &ModelParams, data: &PreparedCorpus, lang: Language, source: ThetaSource) -> Result<Matrix> {
    let l = lang.index();
    let idx: Vec<usize> = (0..data.bows[l].n_docs()).collect();
    let theta = match source {
        ThetaSource::Local => infer_theta(params, Pathway::local(lang), &CountBatch::from_bow(&data.bows[l], &idx))?,
        ThetaSource::Global => infer_theta(params, Pathway::Global, &CountBatch::from_global(&data.globals[l], &idx))?,
    };
    Ok(theta.theta)
}

/// Topic metrics, plus classification when both languages carry labels and
/// planted-topic alignment when the truth is known.
pub fn evaluate(
    params: &ModelParams,
    data: &PreparedCorpus,
    config: &EvalConfig,
    planted: Option<&PlantedTruth>,
) -> Result<MetricReport> {
    let reference = data
        .reference
        .as_ref()
        .ok_or_else(|| Error::Precondition("evaluation needs an aligned reference corpus".into()))?;
    let topics = TopicSet::from_params(params, config.top_n)?;
    let tu = match config.tu_mode {
        TuMode::PerLanguage => topic_uniqueness(&topics),
        TuMode::Pooled => topic_uniqueness_words(&topics.words(data.vocab_refs()), TuMode::Pooled),
    };
    let mut report = MetricReport::new(cnpmi_per_topic(&topics, reference)?, tu);
    if let [Some(l1), Some(l2)] = &data.labels {
        let features = [(Language::L1, l1), (Language::L2, l2)]
            .into_iter()
            .map(|(lang, labels)| {
                let theta = document_theta(params, data, lang, config.theta_source)?;
                let (train, test) = holdout_split(labels.len(), config.test_fraction);
                Ok(LabeledFeatures {
                    train: theta.select_rows(&train),
                    train_labels: train.iter().map(|&d| labels[d]).collect(),
                    test: theta.select_rows(&test),
                    test_labels: test.iter().map(|&d| labels[d]).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report.classification = Some(classification_scores([&features[0], &features[1]], &config.svm)?);
    }
    if let Some(truth) = planted {
        report.alignment_accuracy = Some(match_planted_topics(&topics, data.vocab_refs(), truth)?.alignment_accuracy);
    }
    Ok(report)
}
