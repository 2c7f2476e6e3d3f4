//! One-vs-one soft-margin SVM trained with SMO.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{argmax, check_training};
use crate::error::Result;

static CAP_WARNED: AtomicBool = AtomicBool::new(false);

const TAU: f64 = 1e-12;
const MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf,
}

/// How the RBF width is chosen from the training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// 1 / p
    InverseWidth,
    /// 1 / (p · variance of all training values)
    InverseWidthVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub cost: f64,
    pub gamma: GammaRule,
    pub tolerance: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            kernel: Kernel::Rbf,
            cost: 1.0,
            gamma: GammaRule::InverseWidth,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: usize,
    pub negative: usize,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i · y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub n_classes: usize,
    pub kernel: Kernel,
    pub gamma: f64,
    pub machines: Vec<BinarySvm>,
}

fn kernel(kind: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Kernel::Rbf => (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp(),
    }
}

pub fn resolve_gamma(rule: GammaRule, rows: &[Vec<f64>]) -> f64 {
    let p = rows[0].len() as f64;
    match rule {
        GammaRule::InverseWidth => 1.0 / p,
        GammaRule::InverseWidthVariance => {
            let all: Vec<f64> = rows.iter().flatten().copied().collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (p * var)
            } else {
                1.0 / p
            }
        }
    }
}

/// Solve the dual with maximal-violating-pair working set selection.
/// `y` is ±1. Returns `(alpha, rho, converged)`.
fn smo(k: &[Vec<f64>], y: &[f64], cost: f64, eps: f64) -> (Vec<f64>, f64, bool) {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < cost) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < cost);
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < eps {
            converged = true;
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * q(i, j)).max(TAU);
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
                if alpha[i] > cost {
                    alpha[i] = cost;
                    alpha[j] = cost - diff;
                }
            } else if alpha[j] > cost {
                alpha[j] = cost;
                alpha[i] = cost + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > cost {
                if alpha[i] > cost {
                    alpha[i] = cost;
                    alpha[j] = sum - cost;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cost {
                if alpha[j] > cost {
                    alpha[j] = cost;
                    alpha[i] = sum - cost;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }
    if !converged {
        // Common for large costs on unscaled data; say it loudly once.
        if !CAP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("SMO stopped after {MAX_ITER} iterations without reaching tolerance {eps}; later occurrences are logged at debug level");
        } else {
            log::debug!("SMO stopped after {MAX_ITER} iterations without reaching tolerance {eps}");
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= cost {
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
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    (alpha, rho, converged)
}

impl BinarySvm {
    pub fn decision(&self, kind: Kernel, gamma: f64, row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * kernel(kind, gamma, s, row))
            .sum::<f64>()
            - self.rho
    }
}

impl Svm {
    pub fn train(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, params: SvmParams) -> Result<Svm> {
        check_training(rows, labels, n_classes)?;
        let gamma = resolve_gamma(params.gamma, rows);
        let mut pairs = Vec::new();
        for a in 0..n_classes {
            for b in a + 1..n_classes {
                if labels.contains(&a) && labels.contains(&b) {
                    pairs.push((a, b));
                }
            }
        }
        let machines = pairs
            .par_iter()
            .map(|&(a, b)| {
                let idx: Vec<usize> = (0..rows.len())
                    .filter(|&i| labels[i] == a || labels[i] == b)
                    .collect();
                let y: Vec<f64> = idx
                    .iter()
                    .map(|&i| if labels[i] == a { 1.0 } else { -1.0 })
                    .collect();
                let k: Vec<Vec<f64>> = idx
                    .iter()
                    .map(|&i| {
                        idx.iter()
                            .map(|&j| kernel(params.kernel, gamma, &rows[i], &rows[j]))
                            .collect()
                    })
                    .collect();
                let (alpha, rho, converged) = smo(&k, &y, params.cost, params.tolerance);
                let mut support = Vec::new();
                let mut coef = Vec::new();
                for (t, &i) in idx.iter().enumerate() {
                    if alpha[t] > 0.0 {
                        support.push(rows[i].clone());
                        coef.push(alpha[t] * y[t]);
                    }
                }
                BinarySvm {
                    positive: a,
                    negative: b,
                    support,
                    coef,
                    rho,
                    converged,
                }
            })
            .collect();
        Ok(Svm {
            n_classes,
            kernel: params.kernel,
            gamma,
            machines,
        })
    }

    /// Fraction of pairwise votes won by each class.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for m in &self.machines {
            if m.decision(self.kernel, self.gamma, row) > 0.0 {
                votes[m.positive] += 1.0;
            } else {
                votes[m.negative] += 1.0;
            }
        }
        let total = self.machines.len() as f64;
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.scores(row))
    }
}
