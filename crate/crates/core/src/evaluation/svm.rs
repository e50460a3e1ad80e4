//! Linear max-margin classifier trained by dual coordinate descent on the
//! L2-regularised hinge loss, one-vs-rest for more than two classes.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, max_iter: 1000, tolerance: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    classes: Vec<usize>,
    /// One weight vector per class; the last entry is the bias.
    weights: Vec<Vec<f64>>,
}

fn with_bias(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(1.0);
    v
}

fn binary_dcd(xs: &[Vec<f64>], ys: &[f64], config: &SvmConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = xs[0].len();
    let mut w = vec![0.0; dim];
    let mut alpha = vec![0.0; xs.len()];
    let q: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..config.max_iter {
        order.shuffle(rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            if q[i] <= 0.0 {
                continue;
            }
            let g = ys[i] * dot(&w, &xs[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= config.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, config.c);
                let step = (alpha[i] - old) * ys[i];
                for (wv, &xv) in w.iter_mut().zip(&xs[i]) {
                    *wv += step * xv;
                }
            }
        }
        if pg_max - pg_min < config.tolerance {
            break;
        }
    }
    w
}

impl LinearSvm {
    pub fn fit(x: &Matrix, labels: &[usize], config: &SvmConfig) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!("{} feature rows but {} labels", x.rows(), labels.len())));
        }
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("no training examples".into()));
        }
        let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let xs: Vec<Vec<f64>> = (0..x.rows()).map(|i| with_bias(x.row(i))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = if classes.len() == 1 {
            vec![vec![0.0; x.cols() + 1]]
        } else {
            classes
                .iter()
                .map(|&c| {
                    let ys: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
                    binary_dcd(&xs, &ys, config, &mut rng)
                })
                .collect()
        };
        Ok(LinearSvm { classes, weights })
    }

    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let xb = with_bias(x);
        self.weights.iter().map(|w| dot(w, &xb)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let scores = self.decision(x);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        self.classes[best]
    }
}

/// Fits on the training features and returns accuracy on the test set.
pub fn classify(
    train: &Matrix,
    train_labels: &[usize],
    test: &Matrix,
    test_labels: &[usize],
    config: &SvmConfig,
) -> Result<f64> {
    if test.rows() != test_labels.len() {
        return Err(Error::ShapeMismatch(format!("{} test rows but {} labels", test.rows(), test_labels.len())));
    }
    if test.rows() == 0 {
        return Err(Error::InvalidArgument("no test examples".into()));
    }
    if train.cols() != test.cols() {
        return Err(Error::ShapeMismatch("train and test feature widths differ".into()));
    }
    let svm = LinearSvm::fit(train, train_labels, config)?;
    let correct = (0..test.rows()).filter(|&i| svm.predict(test.row(i)) == test_labels[i]).count();
    Ok(correct as f64 / test.rows() as f64)
}
