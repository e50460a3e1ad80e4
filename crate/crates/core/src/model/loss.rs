//! Closed-form loss terms.

use alloc::format;

use super::{CountBatch, GaussianPosterior, Prior, LOG_FLOOR};
use crate::linalg::{dot, norm, Matrix};
use crate::{Error, Result};

/// `KL(N(μq, e^lvq) ‖ N(μp, e^lvp))` for one dimension.
#[inline]
pub fn gaussian_kl(mu_q: f64, log_var_q: f64, mu_p: f64, log_var_p: f64) -> f64 {
    let diff = mu_q - mu_p;
    0.5 * (log_var_p - log_var_q + (libm::exp(log_var_q) + diff * diff) / libm::exp(log_var_p) - 1.0)
}

/// Mean over the batch of `KL(q ‖ prior)`.
pub fn kl_to_prior(post: &GaussianPosterior, prior: &Prior) -> f64 {
    let (b, k) = post.mu.shape();
    if b == 0 {
        return 0.0;
    }
    let (pm, pv) = prior.moments(k);
    let mut total = 0.0;
    for d in 0..b {
        for j in 0..k {
            total += gaussian_kl(post.mu.get(d, j), post.log_var.get(d, j), pm[j], libm::log(pv[j]));
        }
    }
    total / b as f64
}

/// Negative log-likelihood of the counts (summed per document, averaged over
/// the batch) plus the KL of the posterior from the prior.
pub fn elbo_loss(x: &CountBatch, p: &Matrix, post: &GaussianPosterior, prior: &Prior) -> Result<f64> {
    if p.shape() != (x.len(), x.width()) || post.batch() != x.len() {
        return Err(Error::ShapeMismatch("counts, probabilities and posterior disagree".into()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut recon = 0.0;
    for d in 0..x.len() {
        for &(j, c) in x.row(d) {
            recon -= c * libm::log(p.get(d, j as usize) + LOG_FLOOR);
        }
    }
    Ok(recon / x.len() as f64 + kl_to_prior(post, prior))
}

/// Mean over documents of `KL(q_local ‖ q_global)`.
pub fn kl_align_loss(local: &GaussianPosterior, global: &GaussianPosterior) -> Result<f64> {
    if local.mu.shape() != global.mu.shape() {
        return Err(Error::ShapeMismatch(format!(
            "local posterior is {:?} but global is {:?}",
            local.mu.shape(),
            global.mu.shape()
        )));
    }
    let (b, k) = local.mu.shape();
    if b == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for d in 0..b {
        for j in 0..k {
            total += gaussian_kl(local.mu.get(d, j), local.log_var.get(d, j), global.mu.get(d, j), global.log_var.get(d, j));
        }
    }
    Ok(total / b as f64)
}

/// Mean over documents of `1 − cos(μ_local, μ_global)`.
pub fn sim_align_loss(local: &GaussianPosterior, global: &GaussianPosterior) -> Result<f64> {
    if local.mu.shape() != global.mu.shape() {
        return Err(Error::ShapeMismatch("posterior shapes differ".into()));
    }
    let b = local.batch();
    if b == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for d in 0..b {
        let (a, g) = (local.mu.row(d), global.mu.row(d));
        total += 1.0 - dot(a, g) / (norm(a) * norm(g)).max(LOG_FLOOR);
    }
    Ok(total / b as f64)
}

/// `tr(K H L H) / (n − 1)²` for two `n × n` Gram matrices.
pub fn hsic(k: &Matrix, l: &Matrix) -> Result<f64> {
    let n = k.rows();
    if k.shape() != (n, n) || l.shape() != (n, n) {
        return Err(Error::ShapeMismatch("HSIC needs two square Gram matrices of equal size".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("HSIC needs at least two samples".into()));
    }
    let scale = ((n - 1) * (n - 1)) as f64;
    // tr(HKH · HLH) = ⟨HKH, L⟩ since H is symmetric and idempotent
    Ok(k.double_center().frobenius_dot(l) / scale)
}

/// Linear CKA with its three HSIC components, for reporting and gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CkaValue {
    pub value: f64,
    pub hsic_ab: f64,
    pub hsic_aa: f64,
    pub hsic_bb: f64,
}

fn centered_gram(a: &Matrix) -> Matrix {
    let c = a.center_columns();
    c.matmul_t(&c)
}

fn cka_parts(a: &Matrix, b: &Matrix) -> Result<(CkaValue, Matrix, Matrix)> {
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::ShapeMismatch(format!("CKA inputs have {} and {} rows", n, b.rows())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("CKA needs at least two samples".into()));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument("CKA inputs must be finite".into()));
    }
    let scale = ((n - 1) * (n - 1)) as f64;
    let kc = centered_gram(a);
    let lc = centered_gram(b);
    let hsic_ab = kc.frobenius_dot(&lc) / scale;
    let hsic_aa = kc.frobenius_dot(&kc) / scale;
    let hsic_bb = lc.frobenius_dot(&lc) / scale;
    if !(hsic_aa > 0.0 && hsic_bb > 0.0) {
        return Err(Error::DegenerateRepresentation);
    }
    let value = (hsic_ab / libm::sqrt(hsic_aa * hsic_bb)).clamp(0.0, 1.0);
    Ok((CkaValue { value, hsic_ab, hsic_aa, hsic_bb }, kc, lc))
}

/// Linear-kernel CKA between two representations of the same `n` samples.
pub fn cka(a: &Matrix, b: &Matrix) -> Result<CkaValue> {
    cka_parts(a, b).map(|(v, _, _)| v)
}

/// CKA and its gradient with respect to `a` (with `b` held fixed).
pub fn cka_gradient(a: &Matrix, b: &Matrix) -> Result<(CkaValue, Matrix)> {
    let (v, kc, lc) = cka_parts(a, b)?;
    // cka = ⟨Kc, Lc⟩ / (‖Kc‖‖Lc‖); with K = AAᵀ, ∂cka/∂K = (Lc − (s/a)Kc)/√(ab)
    let s = kc.frobenius_dot(&lc);
    let aa = kc.frobenius_dot(&kc);
    let bb = lc.frobenius_dot(&lc);
    let mut g = lc;
    g.add_scaled(&kc, -s / aa);
    let g = g.scale(1.0 / libm::sqrt(aa * bb));
    // ∂/∂A of f(AAᵀ) is (G + Gᵀ)A = 2GA for symmetric G
    let grad = g.matmul(a).scale(2.0);
    Ok((v, grad))
}
