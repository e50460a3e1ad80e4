//! The full training objective and its analytic gradient.

use alloc::format;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::encoder::{dropout_mask, encode_with, EncoderCache};
use super::loss::{cka_gradient, gaussian_kl};
use super::{concat_columns, global_beta_backward, AlignVariant, CkaTarget, CountBatch, ModelConfig, ModelParams, Pathway, LOG_FLOOR};
use crate::linalg::{dot, norm, softmax_rows, softmax_rows_backward, Matrix};
use crate::{Error, Language, Result};

/// The documents of one language inside a minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageBatch {
    /// Plain bags of words, width `|V_l|`.
    pub local: CountBatch,
    /// Augmented bags of words, width `|V1| + |V2|`.
    pub global: CountBatch,
    /// Document embeddings, one row per document.
    pub doc_embeddings: Option<Matrix>,
}

impl LanguageBatch {
    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub languages: [LanguageBatch; 2],
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.languages.iter().map(LanguageBatch::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn language(&self, lang: Language) -> &LanguageBatch {
        &self.languages[lang.index()]
    }
}

/// Reparameterisation noise and dropout masks for one language's documents.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageNoise {
    pub local_eps: Matrix,
    pub global_eps: Matrix,
    pub local_dropout: Option<Matrix>,
    pub global_dropout: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    pub languages: [LanguageNoise; 2],
}

impl BatchNoise {
    /// All-zero noise and no dropout: the deterministic evaluation setting.
    pub fn zeros(batch: &TrainingBatch, n_topics: usize) -> Self {
        let make = |n: usize| LanguageNoise {
            local_eps: Matrix::zeros(n, n_topics),
            global_eps: Matrix::zeros(n, n_topics),
            local_dropout: None,
            global_dropout: None,
        };
        BatchNoise { languages: [make(batch.languages[0].len()), make(batch.languages[1].len())] }
    }

    /// Draws standard-normal noise, plus dropout masks when `dropout > 0`.
    pub fn sample<R: Rng + ?Sized>(batch: &TrainingBatch, config: &ModelConfig, rng: &mut R) -> Self {
        let k = config.n_topics;
        let h = config.hidden_dim;
        let normal = |n: usize, rng: &mut R| Matrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut draw = |n: usize| {
            let local_eps = normal(n, rng);
            let global_eps = normal(n, rng);
            let local_dropout = dropout_mask(n, h, config.dropout, rng);
            let global_dropout = dropout_mask(n, h, config.dropout, rng);
            LanguageNoise { local_eps, global_eps, local_dropout, global_dropout }
        };
        let l1 = draw(batch.languages[0].len());
        let l2 = draw(batch.languages[1].len());
        BatchNoise { languages: [l1, l2] }
    }
}

/// Every term of the objective for one batch. `align` and `cka` are the
/// unweighted values; `total` includes the weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon_local: [f64; 2],
    pub kl_prior_local: [f64; 2],
    pub recon_global: f64,
    pub kl_prior_global: f64,
    pub align: f64,
    pub cka: f64,
    pub weighted_align: f64,
    pub weighted_cka: f64,
    pub total: f64,
    /// Languages whose CKA term was skipped (fewer than two documents, or a degenerate batch).
    pub cka_skipped: u32,
}

impl LossBreakdown {
    /// Sum of the weighted parts; equals `total` up to rounding.
    pub fn sum_of_parts(&self) -> f64 {
        self.recon_local[0]
            + self.recon_local[1]
            + self.kl_prior_local[0]
            + self.kl_prior_local[1]
            + self.recon_global
            + self.kl_prior_global
            + self.weighted_align
            + self.weighted_cka
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.recon_local.iter().chain(&self.kl_prior_local).all(|x| x.is_finite())
            && self.recon_global.is_finite()
            && self.kl_prior_global.is_finite()
            && self.align.is_finite()
            && self.cka.is_finite()
    }

    /// Accumulates `other` for an epoch average: the local terms of
    /// language `l` with weight `local_w[l]`, everything else with `w`.
    pub fn add_weighted(&mut self, other: &LossBreakdown, local_w: [f64; 2], w: f64) {
        for l in 0..2 {
            self.recon_local[l] += local_w[l] * other.recon_local[l];
            self.kl_prior_local[l] += local_w[l] * other.kl_prior_local[l];
        }
        self.recon_global += w * other.recon_global;
        self.kl_prior_global += w * other.kl_prior_global;
        self.align += w * other.align;
        self.cka += w * other.cka;
        self.weighted_align += w * other.weighted_align;
        self.weighted_cka += w * other.weighted_cka;
        self.total += w * other.total;
        self.cka_skipped += other.cka_skipped;
    }
}

impl core::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "recon_local={:?} kl_local={:?} recon_global={} kl_global={} align={} cka={} total={}",
            self.recon_local, self.kl_prior_local, self.recon_global, self.kl_prior_global, self.align, self.cka, self.total
        )
    }
}

struct PathwayPass<'a> {
    cache: EncoderCache,
    eps: &'a Matrix,
    z: Matrix,
    theta: Matrix,
    grad_theta: Matrix,
    grad_z: Matrix,
    grad_mu: Matrix,
    grad_log_var: Matrix,
}

impl<'a> PathwayPass<'a> {
    fn run(
        params: &ModelParams,
        pathway: Pathway,
        input: &CountBatch,
        eps: &'a Matrix,
        mask: Option<&Matrix>,
    ) -> Result<Self> {
        let cache = encode_with(params.encoder(pathway), input, mask)?;
        if eps.shape() != cache.mu.shape() {
            return Err(Error::ShapeMismatch(format!(
                "noise is {:?} but the posterior is {:?}",
                eps.shape(),
                cache.mu.shape()
            )));
        }
        let mut z = cache.mu.clone();
        for ((zv, &lv), &e) in z.as_mut_slice().iter_mut().zip(cache.log_var.as_slice()).zip(eps.as_slice()) {
            *zv += libm::exp(0.5 * lv) * e;
        }
        let theta = softmax_rows(&z);
        let (n, k) = z.shape();
        Ok(PathwayPass {
            cache,
            eps,
            z,
            theta,
            grad_theta: Matrix::zeros(n, k),
            grad_z: Matrix::zeros(n, k),
            grad_mu: Matrix::zeros(n, k),
            grad_log_var: Matrix::zeros(n, k),
        })
    }

    /// `scale · Σ_d KL(q_d ‖ prior)` with gradients.
    fn prior_kl(&mut self, prior_mean: &[f64], prior_var: &[f64], scale: f64) -> f64 {
        let (n, k) = self.z.shape();
        let mut total = 0.0;
        for d in 0..n {
            for j in 0..k {
                let mu = self.cache.mu.get(d, j);
                let lv = self.cache.log_var.get(d, j);
                let lpv = libm::log(prior_var[j]);
                total += gaussian_kl(mu, lv, prior_mean[j], lpv);
                let gm = self.grad_mu.get(d, j) + scale * (mu - prior_mean[j]) / prior_var[j];
                self.grad_mu.set(d, j, gm);
                let gl = self.grad_log_var.get(d, j) + scale * 0.5 * (libm::exp(lv) / prior_var[j] - 1.0);
                self.grad_log_var.set(d, j, gl);
            }
        }
        scale * total
    }

    /// Propagates `∂θ` and `∂z` down to `∂μ`, `∂log σ²` and into the encoder gradient.
    fn backward(mut self, params: &ModelParams, pathway: Pathway, grads: &mut ModelParams) {
        let mut gz = softmax_rows_backward(&self.theta, &self.grad_theta);
        gz.add_assign(&self.grad_z);
        let lv = &self.cache.log_var;
        for i in 0..gz.as_slice().len() {
            let g = gz.as_slice()[i];
            self.grad_mu.as_mut_slice()[i] += g;
            self.grad_log_var.as_mut_slice()[i] +=
                g * self.eps.as_slice()[i] * 0.5 * libm::exp(0.5 * lv.as_slice()[i]);
        }
        self.cache.backward(
            params.encoder(pathway),
            &self.grad_mu,
            &self.grad_log_var,
            grads.encoder_mut(pathway),
        );
    }
}

/// `−scale · Σ_d Σ_j x_dj log(θ_d · φ_:j + ε)`, accumulating `∂θ` and `∂φ`.
fn sparse_recon(
    x: &CountBatch,
    theta: &Matrix,
    phi: &Matrix,
    scale: f64,
    grad_theta: &mut Matrix,
    grad_phi: Option<&mut Matrix>,
) -> f64 {
    let k = phi.rows();
    let mut total = 0.0;
    let mut col = alloc::vec![0.0; k];
    let mut grad_phi = grad_phi;
    for d in 0..x.len() {
        let th = theta.row(d);
        for &(j, c) in x.row(d) {
            let j = j as usize;
            for (kk, cv) in col.iter_mut().enumerate() {
                *cv = phi.get(kk, j);
            }
            let p = dot(th, &col);
            total -= c * libm::log(p + LOG_FLOOR);
            let gp = -scale * c / (p + LOG_FLOOR);
            let gt = grad_theta.row_mut(d);
            for (g, &cv) in gt.iter_mut().zip(&col) {
                *g += gp * cv;
            }
            if let Some(gphi) = grad_phi.as_deref_mut() {
                for (kk, &t) in th.iter().enumerate() {
                    let v = gphi.get(kk, j) + gp * t;
                    gphi.set(kk, j, v);
                }
            }
        }
    }
    scale * total
}

/// Forward pass of the full objective.
pub fn total_loss(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &TrainingBatch,
    noise: &BatchNoise,
) -> Result<LossBreakdown> {
    evaluate(params, config, batch, noise, None)
}

/// Forward pass plus the gradient with respect to every parameter.
pub fn total_loss_and_grad(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &TrainingBatch,
    noise: &BatchNoise,
) -> Result<(LossBreakdown, ModelParams)> {
    let mut grads = params.zeros_like();
    let loss = evaluate(params, config, batch, noise, Some(&mut grads))?;
    Ok((loss, grads))
}

fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &TrainingBatch,
    noise: &BatchNoise,
    mut grads: Option<&mut ModelParams>,
) -> Result<LossBreakdown> {
    let total_docs = batch.len();
    if total_docs == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let k = params.n_topics();
    let n1 = params.beta1.cols();
    let (prior_mean, prior_var) = config.prior.moments(k);
    let phi_local = [softmax_rows(&params.beta1), softmax_rows(&params.beta2)];
    let phi_global = softmax_rows(&concat_columns(&params.beta1, &params.beta2));
    let want = grads.is_some();
    let new_grad = |m: &Matrix| want.then(|| Matrix::zeros(m.rows(), m.cols()));
    let mut grad_phi_local = [new_grad(&phi_local[0]), new_grad(&phi_local[1])];
    let mut grad_phi_global = new_grad(&phi_global);

    let mut out = LossBreakdown::default();
    let inv_total = 1.0 / total_docs as f64;
    let mut align_sum = 0.0;
    let mut cka_sum = 0.0;

    for lang in Language::BOTH {
        let li = lang.index();
        let lb = &batch.languages[li];
        let ln = &noise.languages[li];
        let n = lb.len();
        if n == 0 {
            continue;
        }
        if lb.global.len() != n {
            return Err(Error::ShapeMismatch(format!("{lang}: {n} local rows but {} global rows", lb.global.len())));
        }
        let local_path = Pathway::local(lang);
        let mut local = PathwayPass::run(params, local_path, &lb.local, &ln.local_eps, ln.local_dropout.as_ref())?;
        let mut global = PathwayPass::run(params, Pathway::Global, &lb.global, &ln.global_eps, ln.global_dropout.as_ref())?;

        let inv_n = 1.0 / n as f64;
        out.recon_local[li] =
            sparse_recon(&lb.local, &local.theta, &phi_local[li], inv_n, &mut local.grad_theta, grad_phi_local[li].as_mut());
        out.kl_prior_local[li] = local.prior_kl(&prior_mean, &prior_var, inv_n);
        out.recon_global +=
            sparse_recon(&lb.global, &global.theta, &phi_global, inv_total, &mut global.grad_theta, grad_phi_global.as_mut());
        out.kl_prior_global += global.prior_kl(&prior_mean, &prior_var, inv_total);

        match config.align {
            AlignVariant::None => {}
            AlignVariant::Kl => {
                let w = config.lambda_align * inv_total;
                for d in 0..n {
                    for j in 0..k {
                        let (mq, lq) = (local.cache.mu.get(d, j), local.cache.log_var.get(d, j));
                        let (mp, lp) = (global.cache.mu.get(d, j), global.cache.log_var.get(d, j));
                        align_sum += gaussian_kl(mq, lq, mp, lp);
                        let vq = libm::exp(lq);
                        let vp = libm::exp(lp);
                        let diff = mq - mp;
                        let gm = local.grad_mu.get(d, j) + w * diff / vp;
                        local.grad_mu.set(d, j, gm);
                        let gl = local.grad_log_var.get(d, j) + w * 0.5 * (vq / vp - 1.0);
                        local.grad_log_var.set(d, j, gl);
                        if !config.align_stop_grad_global {
                            let gm = global.grad_mu.get(d, j) - w * diff / vp;
                            global.grad_mu.set(d, j, gm);
                            let gl = global.grad_log_var.get(d, j) + w * 0.5 * (1.0 - (vq + diff * diff) / vp);
                            global.grad_log_var.set(d, j, gl);
                        }
                    }
                }
            }
            AlignVariant::Sim => {
                let w = config.lambda_align * inv_total;
                for d in 0..n {
                    let a = local.cache.mu.row(d);
                    let g = global.cache.mu.row(d);
                    let (na, ng) = (norm(a), norm(g));
                    let denom = (na * ng).max(LOG_FLOOR);
                    let cos = dot(a, g) / denom;
                    align_sum += 1.0 - cos;
                    for j in 0..k {
                        // ∂cos/∂a = g/(|a||g|) − cos·a/|a|²
                        let da = g[j] / denom - cos * a[j] / (na * na).max(LOG_FLOOR);
                        let dg = a[j] / denom - cos * g[j] / (ng * ng).max(LOG_FLOOR);
                        let v = local.grad_mu.get(d, j) - w * da;
                        local.grad_mu.set(d, j, v);
                        if !config.align_stop_grad_global {
                            let v = global.grad_mu.get(d, j) - w * dg;
                            global.grad_mu.set(d, j, v);
                        }
                    }
                }
            }
        }

        if config.cka_enabled {
            if n < 2 {
                out.cka_skipped += 1;
            } else {
                let emb = lb.doc_embeddings.as_ref().ok_or_else(|| {
                    Error::Config(format!("CKA is enabled but {lang} documents have no embeddings"))
                })?;
                if emb.rows() != n {
                    return Err(Error::ShapeMismatch(format!("{lang}: {} embeddings for {n} documents", emb.rows())));
                }
                let rep = match config.cka_target {
                    CkaTarget::Theta => &local.theta,
                    CkaTarget::Z => &local.z,
                };
                match cka_gradient(rep, emb) {
                    Ok((v, g)) => {
                        cka_sum += 1.0 - v.value;
                        let target = match config.cka_target {
                            CkaTarget::Theta => &mut local.grad_theta,
                            CkaTarget::Z => &mut local.grad_z,
                        };
                        target.add_scaled(&g, -config.lambda_cka);
                    }
                    Err(Error::DegenerateRepresentation) => out.cka_skipped += 1,
                    Err(e) => return Err(e),
                }
            }
        }

        if let Some(g) = grads.as_deref_mut() {
            local.backward(params, local_path, g);
            global.backward(params, Pathway::Global, g);
        }
    }

    out.align = align_sum * inv_total;
    out.cka = cka_sum;
    out.weighted_align = if config.align == AlignVariant::None { 0.0 } else { config.lambda_align * out.align };
    out.weighted_cka = if config.cka_enabled { config.lambda_cka * out.cka } else { 0.0 };
    out.total = out.sum_of_parts();

    if let Some(g) = grads {
        for li in 0..2 {
            if let Some(gphi) = &grad_phi_local[li] {
                let gb = softmax_rows_backward(&phi_local[li], gphi);
                if li == 0 {
                    g.beta1.add_assign(&gb);
                } else {
                    g.beta2.add_assign(&gb);
                }
            }
        }
        if let Some(gphi) = &grad_phi_global {
            let gb = softmax_rows_backward(&phi_global, gphi);
            let (g1, g2) = global_beta_backward(&gb, n1);
            g.beta1.add_assign(&g1);
            g.beta2.add_assign(&g2);
        }
    }
    Ok(out)
}
