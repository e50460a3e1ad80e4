//! Minibatch training with Adam.
//!
//! Each epoch shuffles all documents of both languages together and cuts
//! the shuffled list into batches, so every document passes through its
//! local pathway and the global pathway exactly once per epoch. The entire
//! trainer state (parameters, optimiser moments, random stream) is
//! serialisable, which makes resumed runs continue bit-for-bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BowMatrix;
use crate::lexicon::{DocEmbeddingTable, GlobalBow};
use crate::model::{
    infer_theta, total_loss_and_grad, BatchNoise, CountBatch, LanguageBatch, LossBreakdown, ModelConfig, ModelParams,
    Pathway, TopicProportions, TrainingBatch,
};
use crate::{Error, Language, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Evaluate every this many epochs (0 disables).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 200,
            learning_rate: 2e-3,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            checkpoint_every: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 4 {
            return Err(Error::Config("batch_size must be at least 4".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1)".into()));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::Config("adam_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the trainer reads: per language, the plain and augmented bags
/// of words and (optionally) the document embeddings, all row-aligned.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub bows: [&'a BowMatrix; 2],
    pub globals: [&'a GlobalBow; 2],
    pub doc_embeddings: [Option<&'a DocEmbeddingTable>; 2],
}

impl TrainingData<'_> {
    pub fn n_docs(&self) -> usize {
        self.bows[0].n_docs() + self.bows[1].n_docs()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        for lang in Language::BOTH {
            let l = lang.index();
            let (bow, g) = (self.bows[l], self.globals[l]);
            if bow.language() != lang || g.language() != lang {
                return Err(Error::Config(format!("slot {lang} holds data of the wrong language")));
            }
            if g.n_docs() != bow.n_docs() {
                return Err(Error::ShapeMismatch(format!(
                    "{lang}: {} documents but {} augmented rows",
                    bow.n_docs(),
                    g.n_docs()
                )));
            }
            if g.width() != self.bows[0].n_words() + self.bows[1].n_words() || g.split() != self.bows[0].n_words() {
                return Err(Error::ShapeMismatch(format!("{lang}: augmented width does not match the vocabularies")));
            }
            match self.doc_embeddings[l] {
                Some(e) if e.n_docs() != bow.n_docs() => {
                    return Err(Error::ShapeMismatch(format!(
                        "{lang}: {} document embeddings for {} documents",
                        e.n_docs(),
                        bow.n_docs()
                    )));
                }
                None if config.cka_enabled && bow.n_docs() > 0 => {
                    return Err(Error::Config(format!("CKA is enabled but {lang} has no document embeddings")));
                }
                _ => {}
            }
        }
        if self.n_docs() == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(())
    }

    /// Assembles the batch for the given `(language, document)` entries.
    pub fn batch(&self, entries: &[(Language, usize)], with_embeddings: bool) -> TrainingBatch {
        let mut idx: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for &(l, d) in entries {
            idx[l.index()].push(d);
        }
        let make = |l: usize| LanguageBatch {
            local: CountBatch::from_bow(self.bows[l], &idx[l]),
            global: CountBatch::from_global(self.globals[l], &idx[l]),
            doc_embeddings: if with_embeddings {
                self.doc_embeddings[l].map(|e| e.vectors().select_rows(&idx[l]))
            } else {
                None
            },
        };
        TrainingBatch { languages: [make(0), make(1)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Adam {
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let c1 = 1.0 - libm::pow(b1, self.step as f64);
        let c2 = 1.0 - libm::pow(b2, self.step as f64);
        let lr = config.learning_rate;
        let eps = config.adam_epsilon;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Document-weighted mean of the per-step breakdowns.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.epochs.last().map(|e| &e.loss)
    }
}

/// Resumable training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    model_config: ModelConfig,
    train_config: TrainConfig,
    params: ModelParams,
    optimizer: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
    report: TrainReport,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, train_config: TrainConfig, vocab_sizes: (usize, usize)) -> Result<Self> {
        model_config.validate()?;
        train_config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
        let params = ModelParams::init(&model_config, vocab_sizes.0, vocab_sizes.1, &mut rng);
        let optimizer = Adam::new(&params);
        let report = TrainReport { seed: train_config.seed, epochs: Vec::new() };
        Ok(Trainer { model_config, train_config, params, optimizer, rng, epoch: 0, report })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_config
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_config
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn steps_done(&self) -> u64 {
        self.optimizer.steps()
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.train_config.epochs
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    /// Raises the epoch budget, e.g. to continue a finished run.
    pub fn extend_epochs(&mut self, epochs: usize) {
        self.train_config.epochs = self.train_config.epochs.max(epochs);
    }

    pub fn run_epoch(&mut self, data: &TrainingData<'_>) -> Result<&EpochRecord> {
        data.validate(&self.model_config)?;
        let (v1, v2) = self.params.vocab_sizes();
        if data.bows[0].n_words() != v1 || data.bows[1].n_words() != v2 {
            return Err(Error::ShapeMismatch("training data vocabularies differ from the model".into()));
        }
        let mut order: Vec<(Language, usize)> = Language::BOTH
            .into_iter()
            .flat_map(|l| (0..data.bows[l.index()].n_docs()).map(move |d| (l, d)))
            .collect();
        order.shuffle(&mut self.rng);
        let total_docs = order.len() as f64;
        let lang_docs = Language::BOTH.map(|l| data.bows[l.index()].n_docs() as f64);
        let mut mean = LossBreakdown::default();
        let mut steps = 0;
        for chunk in order.chunks(self.train_config.batch_size) {
            let batch = data.batch(chunk, self.model_config.cka_enabled);
            let noise = BatchNoise::sample(&batch, &self.model_config, &mut self.rng);
            let (loss, grads) = total_loss_and_grad(&self.params, &self.model_config, &batch, &noise)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { step: self.optimizer.steps(), breakdown: format!("{loss}") });
            }
            self.optimizer.update(&mut self.params, &grads, &self.train_config);
            let local_w = Language::BOTH.map(|l| {
                let n = batch.language(l).len() as f64;
                if n > 0.0 { n / lang_docs[l.index()] } else { 0.0 }
            });
            mean.add_weighted(&loss, local_w, chunk.len() as f64 / total_docs);
            steps += 1;
        }
        // each local term is averaged over its own language's documents
        mean.total = mean.sum_of_parts();
        self.epoch += 1;
        self.report.epochs.push(EpochRecord { epoch: self.epoch, steps, loss: mean });
        Ok(self.report.epochs.last().expect("just pushed"))
    }

    /// Runs the remaining epochs, calling `on_epoch` after each one.
    pub fn train<F>(&mut self, data: &TrainingData<'_>, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&Trainer) -> Result<()>,
    {
        data.validate(&self.model_config)?;
        while !self.is_finished() {
            self.run_epoch(data)?;
            on_epoch(self)?;
        }
        Ok(())
    }

    pub fn into_parts(self) -> (ModelParams, TrainReport) {
        (self.params, self.report)
    }
}

/// Trains a fresh model to completion.
pub fn train(
    data: &TrainingData<'_>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    let sizes = (data.bows[0].n_words(), data.bows[1].n_words());
    let mut trainer = Trainer::new(model_config.clone(), train_config.clone(), sizes)?;
    trainer.train(data, |_| Ok(()))?;
    Ok(trainer.into_parts())
}

/// Evaluation-mode proportions of every document of a language from its local encoder.
pub fn infer_local_theta(params: &ModelParams, bow: &BowMatrix) -> Result<TopicProportions> {
    let idx: Vec<usize> = (0..bow.n_docs()).collect();
    infer_theta(params, Pathway::local(bow.language()), &CountBatch::from_bow(bow, &idx))
}

/// Evaluation-mode proportions from the global encoder.
pub fn infer_global_theta(params: &ModelParams, g: &GlobalBow) -> Result<TopicProportions> {
    let idx: Vec<usize> = (0..g.n_docs()).collect();
    infer_theta(params, Pathway::Global, &CountBatch::from_global(g, &idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{augment, AugmentBase, NeighborIndex};
    use crate::linalg::Matrix;

    fn toy_data() -> (BowMatrix, BowMatrix, GlobalBow, GlobalBow, DocEmbeddingTable, DocEmbeddingTable) {
        let b1 = BowMatrix::from_dense(
            Language::L1,
            &[vec![2, 1, 0, 0], vec![1, 2, 0, 0], vec![0, 0, 3, 1], vec![0, 1, 1, 2], vec![1, 0, 0, 1]],
            (0..5).collect(),
        )
        .unwrap();
        let b2 = BowMatrix::from_dense(
            Language::L2,
            &[vec![1, 1, 0], vec![0, 2, 1], vec![0, 0, 3], vec![2, 0, 1], vec![1, 1, 1]],
            (0..5).collect(),
        )
        .unwrap();
        let idx = NeighborIndex::from_lists(
            [vec![vec![1], vec![0], vec![3], vec![2]], vec![vec![1], vec![0], vec![]]],
            [vec![vec![0], vec![1], vec![2], vec![2]], vec![vec![0], vec![1], vec![2]]],
        )
        .unwrap();
        let g1 = augment(&b1, &idx, AugmentBase::Iverson).unwrap();
        let g2 = augment(&b2, &idx, AugmentBase::Iverson).unwrap();
        let e1 = DocEmbeddingTable::new(Language::L1, Matrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin())).unwrap();
        let e2 = DocEmbeddingTable::new(Language::L2, Matrix::from_fn(5, 3, |i, j| ((i + 7 * j) as f64).cos())).unwrap();
        (b1, b2, g1, g2, e1, e2)
    }

    fn small_configs(epochs: usize) -> (ModelConfig, TrainConfig) {
        let m = ModelConfig { n_topics: 2, hidden_dim: 8, ..ModelConfig::default() };
        let t = TrainConfig { epochs, batch_size: 4, seed: 3, learning_rate: 1e-2, ..TrainConfig::default() };
        (m, t)
    }

    #[test]
    fn step_count_matches_batches() {
        let (b1, b2, g1, g2, e1, e2) = toy_data();
        let data = TrainingData { bows: [&b1, &b2], globals: [&g1, &g2], doc_embeddings: [Some(&e1), Some(&e2)] };
        let (m, t) = small_configs(3);
        let mut trainer = Trainer::new(m, t, (4, 3)).unwrap();
        trainer.train(&data, |_| Ok(())).unwrap();
        assert_eq!(trainer.steps_done(), 3 * 10usize.div_ceil(4) as u64);
        for e in &trainer.report().epochs {
            assert!((e.loss.total - e.loss.sum_of_parts()).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_report_and_resume_is_exact() {
        let (b1, b2, g1, g2, e1, e2) = toy_data();
        let data = TrainingData { bows: [&b1, &b2], globals: [&g1, &g2], doc_embeddings: [Some(&e1), Some(&e2)] };
        let (m, t) = small_configs(6);
        let (p1, r1) = train(&data, &m, &t).unwrap();
        let (p2, r2) = train(&data, &m, &t).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(p1, p2);
        let mut partial = Trainer::new(m, t, (4, 3)).unwrap();
        for _ in 0..3 {
            partial.run_epoch(&data).unwrap();
        }
        let mut resumed = partial.clone();
        resumed.train(&data, |_| Ok(())).unwrap();
        assert_eq!(resumed.report(), &r1);
        assert_eq!(resumed.params, p1);
    }

    #[test]
    fn unweighted_loss_decreases_on_average() {
        let (b1, b2, g1, g2, e1, e2) = toy_data();
        let data = TrainingData { bows: [&b1, &b2], globals: [&g1, &g2], doc_embeddings: [Some(&e1), Some(&e2)] };
        let (m, t) = small_configs(5);
        let m = ModelConfig { lambda_align: 0.0, lambda_cka: 0.0, ..m };
        let mut mean = [0.0; 5];
        for seed in 0..3 {
            let (_, r) = train(&data, &m, &TrainConfig { seed, ..t.clone() }).unwrap();
            for (acc, e) in mean.iter_mut().zip(&r.epochs) {
                *acc += e.loss.total / 3.0;
            }
        }
        assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
    }

    #[test]
    fn cka_without_embeddings_fails_before_training() {
        let (b1, b2, g1, g2, e1, _) = toy_data();
        let data = TrainingData { bows: [&b1, &b2], globals: [&g1, &g2], doc_embeddings: [Some(&e1), None] };
        let (m, t) = small_configs(1);
        assert!(matches!(train(&data, &m, &t), Err(Error::Config(_))));
        let m = ModelConfig { cka_enabled: false, ..m };
        assert!(train(&data, &m, &t).is_ok());
    }

    #[test]
    fn small_batch_rejected() {
        let (m, t) = small_configs(1);
        let t = TrainConfig { batch_size: 3, ..t };
        assert!(matches!(Trainer::new(m, t, (4, 3)), Err(Error::Config(_))));
    }

    #[test]
    fn inferred_theta_on_simplex_and_repeatable() {
        let (b1, b2, g1, g2, e1, e2) = toy_data();
        let data = TrainingData { bows: [&b1, &b2], globals: [&g1, &g2], doc_embeddings: [Some(&e1), Some(&e2)] };
        let (m, t) = small_configs(2);
        let (p, _) = train(&data, &m, &t).unwrap();
        let a = infer_local_theta(&p, &b1).unwrap();
        let b = infer_local_theta(&p, &b1).unwrap();
        assert_eq!(a, b);
        let g = infer_global_theta(&p, &g2).unwrap();
        for th in [&a, &g] {
            for d in 0..th.n_docs() {
                let s: f64 = th.theta.row(d).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
