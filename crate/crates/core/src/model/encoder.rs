use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{xavier, CountBatch, GaussianPosterior, LOG_VAR_CLAMP};
use crate::linalg::{sigmoid, softplus, Matrix};
use crate::{Error, Result};

/// `L1-normalise → affine → softplus → dropout → (μ head, log σ² head)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub w_hidden: Matrix,
    pub b_hidden: Vec<f64>,
    pub w_mu: Matrix,
    pub b_mu: Vec<f64>,
    pub w_log_var: Matrix,
    pub b_log_var: Vec<f64>,
}

impl Encoder {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, topics: usize, rng: &mut R) -> Self {
        Encoder {
            w_hidden: xavier(input, hidden, rng),
            b_hidden: vec![0.0; hidden],
            w_mu: xavier(hidden, topics, rng),
            b_mu: vec![0.0; topics],
            w_log_var: xavier(hidden, topics, rng),
            b_log_var: vec![0.0; topics],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Encoder {
            w_hidden: Matrix::zeros(self.w_hidden.rows(), self.w_hidden.cols()),
            b_hidden: vec![0.0; self.b_hidden.len()],
            w_mu: Matrix::zeros(self.w_mu.rows(), self.w_mu.cols()),
            b_mu: vec![0.0; self.b_mu.len()],
            w_log_var: Matrix::zeros(self.w_log_var.rows(), self.w_log_var.cols()),
            b_log_var: vec![0.0; self.b_log_var.len()],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_mu.cols()
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w_hidden.as_slice(),
            &self.b_hidden,
            self.w_mu.as_slice(),
            &self.b_mu,
            self.w_log_var.as_slice(),
            &self.b_log_var,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w_hidden.as_mut_slice(),
            &mut self.b_hidden,
            self.w_mu.as_mut_slice(),
            &mut self.b_mu,
            self.w_log_var.as_mut_slice(),
            &mut self.b_log_var,
        ]
    }
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    normalized: Vec<Vec<(u32, f64)>>,
    pre_hidden: Matrix,
    hidden: Matrix,
    mask: Option<Matrix>,
    raw_log_var: Matrix,
    pub mu: Matrix,
    pub log_var: Matrix,
}

impl EncoderCache {
    pub fn posterior(&self) -> GaussianPosterior {
        GaussianPosterior { mu: self.mu.clone(), log_var: self.log_var.clone() }
    }

    /// Accumulates parameter gradients into `grad` given `∂L/∂μ` and `∂L/∂log σ²`.
    pub fn backward(&self, enc: &Encoder, grad_mu: &Matrix, grad_log_var: &Matrix, grad: &mut Encoder) {
        let (b, k) = grad_mu.shape();
        let mut g_raw_lv = grad_log_var.clone();
        for (g, &r) in g_raw_lv.as_mut_slice().iter_mut().zip(self.raw_log_var.as_slice()) {
            if !(-LOG_VAR_CLAMP..=LOG_VAR_CLAMP).contains(&r) {
                *g = 0.0;
            }
        }
        grad.w_mu.add_assign(&self.hidden.t_matmul(grad_mu));
        grad.w_log_var.add_assign(&self.hidden.t_matmul(&g_raw_lv));
        for d in 0..b {
            for j in 0..k {
                grad.b_mu[j] += grad_mu.get(d, j);
                grad.b_log_var[j] += g_raw_lv.get(d, j);
            }
        }
        let mut g_hidden = grad_mu.matmul_t(&enc.w_mu);
        g_hidden.add_assign(&g_raw_lv.matmul_t(&enc.w_log_var));
        if let Some(mask) = &self.mask {
            for (g, &m) in g_hidden.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *g *= m;
            }
        }
        for (g, &pre) in g_hidden.as_mut_slice().iter_mut().zip(self.pre_hidden.as_slice()) {
            *g *= sigmoid(pre);
        }
        let h = enc.hidden_dim();
        for (d, row) in self.normalized.iter().enumerate() {
            let gh = g_hidden.row(d);
            for &(j, u) in row {
                let wrow = &mut grad.w_hidden.as_mut_slice()[j as usize * h..(j as usize + 1) * h];
                for (w, &g) in wrow.iter_mut().zip(gh) {
                    *w += u * g;
                }
            }
            for (bv, &g) in grad.b_hidden.iter_mut().zip(gh) {
                *bv += g;
            }
        }
    }
}

/// Encodes a batch. `dropout_mask`, when given, multiplies the hidden layer
/// elementwise (entries are `0` or `1/(1-p)`).
pub fn encode_with(enc: &Encoder, input: &CountBatch, dropout_mask: Option<&Matrix>) -> Result<EncoderCache> {
    if input.width() != enc.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input width {} but the encoder expects {}",
            input.width(),
            enc.input_dim()
        )));
    }
    let b = input.len();
    let h = enc.hidden_dim();
    if let Some(m) = dropout_mask {
        if m.shape() != (b, h) {
            return Err(Error::ShapeMismatch("dropout mask shape".into()));
        }
    }
    let mut normalized = Vec::with_capacity(b);
    let mut pre_hidden = Matrix::zeros(b, h);
    for d in 0..b {
        let row = input.row(d);
        let total: f64 = row.iter().map(|&(_, v)| v).sum();
        if !(total > 0.0) {
            return Err(Error::Precondition(format!("input row {d} is all zero")));
        }
        let norm_row: Vec<(u32, f64)> = row.iter().map(|&(j, v)| (j, v / total)).collect();
        let out = pre_hidden.row_mut(d);
        out.copy_from_slice(&enc.b_hidden);
        for &(j, u) in &norm_row {
            for (o, &w) in out.iter_mut().zip(enc.w_hidden.row(j as usize)) {
                *o += u * w;
            }
        }
        normalized.push(norm_row);
    }
    let mut hidden = pre_hidden.map(softplus);
    if let Some(m) = dropout_mask {
        for (x, &mv) in hidden.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *x *= mv;
        }
    }
    let mut mu = hidden.matmul(&enc.w_mu);
    let mut raw_log_var = hidden.matmul(&enc.w_log_var);
    for d in 0..b {
        for (x, &bv) in mu.row_mut(d).iter_mut().zip(&enc.b_mu) {
            *x += bv;
        }
        for (x, &bv) in raw_log_var.row_mut(d).iter_mut().zip(&enc.b_log_var) {
            *x += bv;
        }
    }
    let log_var = raw_log_var.map(|x| x.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP));
    Ok(EncoderCache { normalized, pre_hidden, hidden, mask: dropout_mask.cloned(), raw_log_var, mu, log_var })
}

/// Draws an inverted-dropout mask with keep probability `1 - rate`.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Option<Matrix> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < rate { 0.0 } else { keep }))
}
