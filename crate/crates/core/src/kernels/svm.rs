//! Soft-margin kernel SVM trained by sequential minimal optimization.
//!
//! Each step picks the maximal violating pair (first-order working-set
//! selection) and solves the two-variable subproblem analytically, so the
//! equality constraint `sum(alpha_i * y_i) = 0` is preserved exactly up to
//! rounding and the box `0 <= alpha_i <= C` by clipping.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{distinct_ngrams, interned_profiles, normalize_value, KernelConfig, KernelMatrix, NgramProfile};
use crate::error::{Error, Result};
use crate::util::{self, sigmoid};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    /// Iteration cap, in units of `n` pair updates.
    pub max_passes: usize,
    /// Orders the index scan, which decides ties in pair selection.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            max_passes: 10_000,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("SVM C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("SVM tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmSolution {
    /// Decision value for training point `i` from the Gram matrix.
    pub fn decision(&self, k: &KernelMatrix, labels: &[f64], i: usize) -> f64 {
        let row = k.row(i);
        self.alpha
            .iter()
            .zip(labels)
            .zip(row)
            .map(|((a, y), kv)| a * y * kv)
            .sum::<f64>()
            + self.bias
    }
}

/// Solves the dual soft-margin problem over a precomputed Gram matrix.
/// `labels` must be ±1 and contain both classes.
pub fn svm_train(k: &KernelMatrix, labels: &[f64], params: &SvmParams) -> Result<SvmSolution> {
    params.validate()?;
    let n = k.len();
    crate::error::check_dim(n, labels.len())?;
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid("SVM labels must be +1 or -1"));
    }
    if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
        return Err(Error::invalid("SVM training needs both classes"));
    }
    let c = params.c;
    let y = labels;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut util::rng(params.seed));

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let max_iter = params.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for &t in &order {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = k.get(i, j);
        let qij = y[i] * y[j] * kij;
        if y[i] != y[j] {
            let quad = (k.get(i, i) + k.get(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k.get(i, i) + k.get(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (row_i, row_j) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * row_i[t] * di + y[j] * row_j[t] * dj);
        }
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(SvmSolution {
        alpha,
        bias: -rho,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportVector {
    /// Position in the training set.
    pub index: usize,
    /// Kernel input text (already preprocessed).
    pub text: String,
    /// `alpha_i * y_i`.
    pub coef: f64,
}

/// Trained SVM that evaluates the spectrum kernel against its support
/// vectors at prediction time.
#[derive(Debug, Serialize, Deserialize)]
pub struct SvmModel {
    pub support: Vec<SupportVector>,
    pub bias: f64,
    pub c: f64,
    pub kernel: KernelConfig,
    #[serde(skip)]
    ngram_cache: OnceLock<SupportIndex>,
}

impl Clone for SvmModel {
    fn clone(&self) -> Self {
        SvmModel {
            support: self.support.clone(),
            bias: self.bias,
            c: self.c,
            kernel: self.kernel,
            ngram_cache: OnceLock::new(),
        }
    }
}

impl PartialEq for SvmModel {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support && self.bias == other.bias && self.c == other.c && self.kernel == other.kernel
    }
}

impl SvmModel {
    pub fn from_solution(
        solution: &SvmSolution,
        texts: &[&str],
        labels: &[f64],
        kernel: KernelConfig,
        c: f64,
    ) -> Result<Self> {
        crate::error::check_dim(texts.len(), solution.alpha.len())?;
        crate::error::check_dim(labels.len(), solution.alpha.len())?;
        let support = solution
            .alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| SupportVector {
                index: i,
                text: texts[i].to_string(),
                coef: a * labels[i],
            })
            .collect();
        Ok(SvmModel {
            support,
            bias: solution.bias,
            c,
            kernel,
            ngram_cache: OnceLock::new(),
        })
    }

    /// Trains on already-preprocessed texts with `true` = positive class.
    pub fn fit(texts: &[&str], positive: &[bool], kernel: KernelConfig, params: &SvmParams) -> Result<Self> {
        let labels: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        let gram = super::kernel_matrix(texts, &kernel)?;
        let solution = svm_train(&gram, &labels, params)?;
        SvmModel::from_solution(&solution, texts, &labels, kernel, params.c)
    }

    fn index(&self) -> &SupportIndex {
        self.ngram_cache.get_or_init(|| {
            let texts: Vec<&str> = self.support.iter().map(|sv| sv.text.as_str()).collect();
            let (vocab, profiles) = interned_profiles(&texts, &self.kernel);
            SupportIndex { vocab, profiles }
        })
    }

    pub fn decision_value(&self, text: &str) -> f64 {
        let index = self.index();
        let grams = distinct_ngrams(text, &self.kernel);
        let kxx = grams.len() as f64;
        // n-grams no support vector contains cannot contribute to any overlap
        let mut ids: Vec<u32> = grams.iter().filter_map(|g| index.vocab.get(g.as_str()).copied()).collect();
        ids.sort_unstable();
        let query = NgramProfile { ids };
        self.support
            .iter()
            .zip(&index.profiles)
            .map(|(sv, prof)| {
                let shared = prof.shared(&query) as f64;
                let k = if self.kernel.normalize {
                    normalize_value(shared, prof.self_count() as f64, kxx)
                } else {
                    shared
                };
                sv.coef * k
            })
            .sum::<f64>()
            + self.bias
    }
}

/// Interned n-grams of the support vectors.
#[derive(Debug)]
struct SupportIndex {
    vocab: HashMap<String, u32>,
    profiles: Vec<NgramProfile>,
}

/// Logistic squashing of the raw margin (no fitted calibration).
pub fn svm_predict_proba(model: &SvmModel, text: &str) -> f64 {
    sigmoid(model.decision_value(text))
}
