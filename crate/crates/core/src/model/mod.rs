//! Dual-pathway variational topic model.
//!
//! Two local pathways (one per language) read plain bags of words; a global
//! pathway reads augmented bags over the joint vocabulary. Every pathway
//! encodes to a diagonal Gaussian, samples `z`, maps it to topic proportions
//! with a softmax and reconstructs its input with a mixture decoder. The
//! local decoders use `β1` and `β2`; the global decoder uses their
//! concatenation, with the softmax taken across both halves of each row.

mod encoder;
mod loss;
mod objective;

pub use encoder::{encode_with, Encoder, EncoderCache};
pub use loss::{
    cka, cka_gradient, elbo_loss, gaussian_kl, hsic, kl_align_loss, kl_to_prior, sim_align_loss, CkaValue,
};
pub use objective::{
    total_loss, total_loss_and_grad, BatchNoise, LanguageBatch, LanguageNoise, LossBreakdown, TrainingBatch,
};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BowMatrix, Vocabulary};
use crate::lexicon::{GlobalBow, NeighborConfig};
use crate::linalg::{softmax_rows, Matrix};
use crate::{Error, Language, Result};

/// Lower bound applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
/// Encoded log-variances are clamped to `[-LOG_VAR_CLAMP, LOG_VAR_CLAMP]`.
pub const LOG_VAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignVariant {
    /// KL divergence between local and global posteriors.
    Kl,
    /// `1 − cos(μ_local, μ_global)`.
    Sim,
    None,
}

/// Which per-document representation is compared with the document embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CkaTarget {
    #[default]
    Theta,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Prior {
    StandardNormal,
    /// Laplace approximation of a symmetric Dirichlet in softmax space.
    LaplaceDirichlet { alpha: f64 },
}

impl Prior {
    /// Per-dimension mean and variance of the Gaussian prior on `z`.
    pub fn moments(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        match *self {
            Prior::StandardNormal => (vec![0.0; k], vec![1.0; k]),
            Prior::LaplaceDirichlet { alpha } => {
                let kf = k as f64;
                // symmetric alpha, so log α − mean(log α) vanishes
                let mean = vec![0.0; k];
                let inv_sum = kf / alpha;
                let var = vec![(1.0 / alpha) * (1.0 - 2.0 / kf) + inv_sum / (kf * kf); k];
                (mean, var)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_topics: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    /// Weight of the local/global alignment term.
    pub lambda_align: f64,
    /// Weight of the CKA term.
    pub lambda_cka: f64,
    pub neighbors: NeighborConfig,
    pub align: AlignVariant,
    pub cka_enabled: bool,
    pub cka_target: CkaTarget,
    /// Treat the global posterior as a constant inside the alignment term.
    pub align_stop_grad_global: bool,
    pub prior: Prior,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_topics: 50,
            hidden_dim: 200,
            dropout: 0.2,
            lambda_align: 1.0,
            lambda_cka: 1.0,
            neighbors: NeighborConfig::default(),
            align: AlignVariant::Kl,
            cka_enabled: true,
            cka_target: CkaTarget::Theta,
            align_stop_grad_global: false,
            prior: Prior::StandardNormal,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_topics < 2 {
            return Err(Error::Config("n_topics must be at least 2".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.lambda_align >= 0.0 && self.lambda_cka >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if let Prior::LaplaceDirichlet { alpha } = self.prior {
            if !(alpha > 0.0) {
                return Err(Error::Config("Dirichlet alpha must be positive".into()));
            }
        }
        Ok(())
    }

    /// Applies one of the named ablations: `full`, `no_kl`, `no_cka`, `sim`.
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::Full => {
                self.align = AlignVariant::Kl;
                self.cka_enabled = true;
            }
            Ablation::NoKl => {
                self.align = AlignVariant::None;
                self.cka_enabled = true;
            }
            Ablation::NoCka => {
                self.align = AlignVariant::Kl;
                self.cka_enabled = false;
            }
            Ablation::Sim => {
                self.align = AlignVariant::Sim;
                self.cka_enabled = true;
            }
        }
        self
    }

    pub fn ablation(&self) -> Option<Ablation> {
        match (self.align, self.cka_enabled) {
            (AlignVariant::Kl, true) => Some(Ablation::Full),
            (AlignVariant::None, true) => Some(Ablation::NoKl),
            (AlignVariant::Kl, false) => Some(Ablation::NoCka),
            (AlignVariant::Sim, true) => Some(Ablation::Sim),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoKl,
    NoCka,
    Sim,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoKl, Ablation::NoCka, Ablation::Sim];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoKl => "no_kl",
            Ablation::NoCka => "no_cka",
            Ablation::Sim => "sim",
        }
    }

    pub fn parse(s: &str) -> Option<Ablation> {
        Ablation::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    Local1,
    Local2,
    Global,
}

impl Pathway {
    pub fn local(lang: Language) -> Pathway {
        match lang {
            Language::L1 => Pathway::Local1,
            Language::L2 => Pathway::Local2,
        }
    }
}

/// A batch of nonnegative count rows `(column, value)` with a declared width.
#[derive(Debug, Clone, PartialEq)]
pub struct CountBatch {
    width: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl CountBatch {
    pub fn new(width: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        for (d, r) in rows.iter().enumerate() {
            if r.iter().any(|&(j, v)| j as usize >= width || !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {d} has an entry outside width {width} or a negative count")));
            }
        }
        Ok(CountBatch { width, rows })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::ShapeMismatch("ragged dense rows".into()));
        }
        let sparse = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j as u32, v)).collect())
            .collect();
        CountBatch::new(width, sparse)
    }

    pub fn from_bow(bow: &BowMatrix, idx: &[usize]) -> Self {
        let rows = idx
            .iter()
            .map(|&d| bow.sparse_row(d).iter().map(|&(j, c)| (j, c as f64)).collect())
            .collect();
        CountBatch { width: bow.n_words(), rows }
    }

    pub fn from_global(g: &GlobalBow, idx: &[usize]) -> Self {
        let rows = idx
            .iter()
            .map(|&d| g.sparse_row(d).iter().map(|&(j, c)| (j, c as f64)).collect())
            .collect();
        CountBatch { width: g.width(), rows }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, d: usize) -> &[(u32, f64)] {
        &self.rows[d]
    }

    pub fn dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.width);
        for (d, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m.set(d, j as usize, v);
            }
        }
        m
    }
}

/// Diagonal Gaussian posteriors, one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Matrix,
    pub log_var: Matrix,
}

impl GaussianPosterior {
    pub fn new(mu: Matrix, log_var: Matrix) -> Result<Self> {
        if mu.shape() != log_var.shape() {
            return Err(Error::ShapeMismatch("mu and log_var shapes differ".into()));
        }
        Ok(GaussianPosterior { mu, log_var })
    }

    pub fn batch(&self) -> usize {
        self.mu.rows()
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }
}

/// Document-topic proportions; every row lies on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicProportions {
    pub theta: Matrix,
}

impl TopicProportions {
    pub fn argmax(&self, d: usize) -> usize {
        let row = self.theta.row(d);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    }

    pub fn n_docs(&self) -> usize {
        self.theta.rows()
    }
}

/// Every trainable tensor of the model. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub local1: Encoder,
    pub local2: Encoder,
    pub global: Encoder,
    /// Topic-word logits for language 1, `K × |V1|`.
    pub beta1: Matrix,
    /// Topic-word logits for language 2, `K × |V2|`.
    pub beta2: Matrix,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, v1: usize, v2: usize, rng: &mut R) -> Self {
        let (k, h) = (config.n_topics, config.hidden_dim);
        ModelParams {
            local1: Encoder::init(v1, h, k, rng),
            local2: Encoder::init(v2, h, k, rng),
            global: Encoder::init(v1 + v2, h, k, rng),
            beta1: xavier(k, v1, rng),
            beta2: xavier(k, v2, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            local1: self.local1.zeros_like(),
            local2: self.local2.zeros_like(),
            global: self.global.zeros_like(),
            beta1: Matrix::zeros(self.beta1.rows(), self.beta1.cols()),
            beta2: Matrix::zeros(self.beta2.rows(), self.beta2.cols()),
        }
    }

    pub fn n_topics(&self) -> usize {
        self.beta1.rows()
    }

    pub fn vocab_sizes(&self) -> (usize, usize) {
        (self.beta1.cols(), self.beta2.cols())
    }

    pub fn encoder(&self, p: Pathway) -> &Encoder {
        match p {
            Pathway::Local1 => &self.local1,
            Pathway::Local2 => &self.local2,
            Pathway::Global => &self.global,
        }
    }

    pub fn encoder_mut(&mut self, p: Pathway) -> &mut Encoder {
        match p {
            Pathway::Local1 => &mut self.local1,
            Pathway::Local2 => &mut self.local2,
            Pathway::Global => &mut self.global,
        }
    }

    pub fn beta(&self, lang: Language) -> &Matrix {
        match lang {
            Language::L1 => &self.beta1,
            Language::L2 => &self.beta2,
        }
    }

    /// Flat views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(20);
        for e in [&self.local1, &self.local2, &self.global] {
            v.extend(e.tensors());
        }
        v.push(self.beta1.as_slice());
        v.push(self.beta2.as_slice());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(20);
        for e in [&mut self.local1, &mut self.local2, &mut self.global] {
            v.extend(e.tensors_mut());
        }
        v.push(self.beta1.as_mut_slice());
        v.push(self.beta2.as_mut_slice());
        v
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let a = libm::sqrt(6.0 / (rows + cols) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

/// Runs one pathway's encoder in evaluation mode (no dropout).
pub fn encode(params: &ModelParams, pathway: Pathway, input: &CountBatch) -> Result<GaussianPosterior> {
    let cache = encode_with(params.encoder(pathway), input, None)?;
    Ok(cache.posterior())
}

/// `z = μ + exp(½ log σ²) ⊙ ε`.
pub fn reparameterize(post: &GaussianPosterior, noise: &Matrix) -> Result<Matrix> {
    if noise.shape() != post.mu.shape() {
        return Err(Error::ShapeMismatch("noise shape differs from posterior".into()));
    }
    let mut z = post.mu.clone();
    for ((zv, &lv), &e) in z.as_mut_slice().iter_mut().zip(post.log_var.as_slice()).zip(noise.as_slice()) {
        *zv += libm::exp(0.5 * lv) * e;
    }
    Ok(z)
}

pub fn proportions(z: &Matrix) -> TopicProportions {
    TopicProportions { theta: softmax_rows(z) }
}

/// `θ · rowsoftmax(β)`.
pub fn decode_local(theta: &TopicProportions, beta: &Matrix) -> Result<Matrix> {
    if theta.theta.cols() != beta.rows() {
        return Err(Error::ShapeMismatch("theta width differs from topic count".into()));
    }
    Ok(theta.theta.matmul(&softmax_rows(beta)))
}

/// `[β1 | β2]`, row by row.
pub fn global_beta(params: &ModelParams) -> Matrix {
    concat_columns(&params.beta1, &params.beta2)
}

pub(crate) fn concat_columns(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows(), b.rows());
    let mut data = Vec::with_capacity(a.rows() * (a.cols() + b.cols()));
    for k in 0..a.rows() {
        data.extend_from_slice(a.row(k));
        data.extend_from_slice(b.row(k));
    }
    Matrix::from_vec(a.rows(), a.cols() + b.cols(), data)
}

/// Routes a gradient on the global logits back to `(∂β1, ∂β2)`.
pub fn global_beta_backward(grad_global: &Matrix, split: usize) -> (Matrix, Matrix) {
    let k = grad_global.rows();
    let n2 = grad_global.cols() - split;
    let g1 = Matrix::from_fn(k, split, |i, j| grad_global.get(i, j));
    let g2 = Matrix::from_fn(k, n2, |i, j| grad_global.get(i, split + j));
    (g1, g2)
}

/// `θ_global · rowsoftmax([β1 | β2])`, softmax over the joint vocabulary.
pub fn decode_global(theta: &TopicProportions, params: &ModelParams) -> Result<Matrix> {
    decode_local(theta, &global_beta(params))
}

/// Evaluation-mode topic proportions: no dropout, `z = μ`.
pub fn infer_theta(params: &ModelParams, pathway: Pathway, input: &CountBatch) -> Result<TopicProportions> {
    Ok(proportions(&encode(params, pathway, input)?.mu))
}

/// Which topic-word row [`top_words`] reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicView {
    Language(Language),
    Global,
}

/// Indices of the `t` largest logits of a row, ties broken by lower index.
pub fn top_indices(row: &[f64], t: usize) -> Result<Vec<usize>> {
    if t > row.len() {
        return Err(Error::InvalidArgument(format!("requested {t} top words from a row of {}", row.len())));
    }
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(t);
    Ok(idx)
}

pub fn top_words(
    params: &ModelParams,
    vocabs: [&Vocabulary; 2],
    view: TopicView,
    topic: usize,
    t: usize,
) -> Result<Vec<String>> {
    if topic >= params.n_topics() {
        return Err(Error::InvalidArgument(format!("topic {topic} out of range")));
    }
    let n1 = params.beta1.cols();
    let words = match view {
        TopicView::Language(lang) => top_indices(params.beta(lang).row(topic), t)?
            .into_iter()
            .map(|j| String::from(vocabs[lang.index()].word(j)))
            .collect(),
        TopicView::Global => {
            let g = global_beta(params);
            top_indices(g.row(topic), t)?
                .into_iter()
                .map(|j| if j < n1 { String::from(vocabs[0].word(j)) } else { String::from(vocabs[1].word(j - n1)) })
                .collect()
        }
    };
    Ok(words)
}
