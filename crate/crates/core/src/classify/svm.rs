//! One-vs-rest SVM with a Gaussian divergence kernel, trained by SMO on a
//! precomputed Gram matrix.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::divergence_gaussian_kernel;
use crate::error::{Error, Result};
use crate::rkhs_divergence::DivergenceMatrix;
use crate::spd::{sym_eig, symmetrize};

/// Curvature used when a working pair has non-positive curvature.
const TAU: f64 = 1e-12;
/// A training Gram whose smallest eigenvalue is below `-INDEFINITE_TOL * trace`
/// is recorded as indefinite.
pub const INDEFINITE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    pub beta: f64,
    pub c: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Train on the Gram matrix with negative eigenvalues set to zero.
    #[serde(default)]
    pub clip_spectrum: bool,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    1_000_000
}

impl SvmParams {
    pub fn new(beta: f64, c: f64) -> Self {
        Self {
            beta,
            c,
            tol: default_tol(),
            max_iter: default_max_iter(),
            clip_spectrum: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.beta) {
            return Err(Error::Config(format!("svm beta must be positive, got {}", self.beta)));
        }
        if !positive(self.c) {
            return Err(Error::Config(format!("svm C must be positive, got {}", self.c)));
        }
        if !positive(self.tol) {
            return Err(Error::Config(format!("svm tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("svm max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// One binary machine: `f(q) = sum_i alpha_i y_i k(d_i, q) + bias` with
/// `y_i = +1` for `class` and `-1` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarySvm {
    pub class: usize,
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmModel {
    /// Name of the divergence inside the kernel.
    pub divergence: String,
    pub params: SvmParams,
    /// Sorted class ids, one machine each.
    pub classes: Vec<usize>,
    pub labels: Vec<usize>,
    pub machines: Vec<BinarySvm>,
    /// Smallest eigenvalue of the training Gram over its trace.
    pub gram_min_eig_ratio: f64,
    pub indefinite: bool,
    /// Opaque references to the training descriptors, in training order.
    #[serde(default)]
    pub training: Vec<String>,
}

impl SvmModel {
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    /// Per-class decision values from the divergences between the query
    /// and every training descriptor.
    pub fn decision_values(&self, divergences: &[f64]) -> Result<Vec<f64>> {
        if divergences.len() != self.labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} training descriptors, query supplied {} divergences",
                self.labels.len(),
                divergences.len()
            )));
        }
        let k = divergences
            .iter()
            .map(|&d| divergence_gaussian_kernel(d, self.params.beta))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self
            .machines
            .iter()
            .map(|mach| {
                let s: f64 = mach
                    .alpha
                    .iter()
                    .zip(&self.labels)
                    .zip(&k)
                    .map(|((a, &l), kv)| a * sign(l, mach.class) * kv)
                    .sum();
                s + mach.bias
            })
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.machines.len() != self.classes.len() {
            return Err(Error::InvalidInput("one machine per class expected".into()));
        }
        for (mach, &class) in self.machines.iter().zip(&self.classes) {
            if mach.class != class || mach.alpha.len() != self.labels.len() {
                return Err(Error::InvalidInput("machine does not match the training labels".into()));
            }
            let c = self.params.c;
            if mach.alpha.iter().any(|&a| !(a >= 0.0 && a <= c)) || !mach.bias.is_finite() {
                return Err(Error::InvalidInput("dual coefficients outside [0, C]".into()));
            }
        }
        if !self.training.is_empty() && self.training.len() != self.labels.len() {
            return Err(Error::InvalidInput("training references do not match labels".into()));
        }
        Ok(())
    }
}

fn sign(label: usize, class: usize) -> f64 {
    if label == class {
        1.0
    } else {
        -1.0
    }
}

/// Gram matrix `exp(-beta D)` of a symmetric divergence table.
pub fn divergence_gram(divs: &DivergenceMatrix, beta: f64) -> Result<DMatrix<f64>> {
    let n = divs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = divergence_gaussian_kernel(divs.get(i, j), beta)?;
        }
    }
    Ok(symmetrize(&k))
}

/// Smallest eigenvalue of `k` divided by its trace.
pub fn min_eig_ratio(k: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eig(k)?;
    let tr = k.trace();
    Ok(eig.eigenvalues[eig.len() - 1] / tr)
}

fn clip_negative_spectrum(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(k)?;
    let v = &eig.eigenvectors;
    let l = eig.eigenvalues.map(|x| x.max(0.0));
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&l) * v.transpose())))
}

/// Trains one machine per class on a precomputed symmetric divergence table.
pub fn svm_train(divs: &DivergenceMatrix, labels: &[usize], divergence: &str, params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    if divs.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} descriptors but {} labels",
            divs.len(),
            labels.len()
        )));
    }
    if !divs.is_symmetric(0.0) {
        return Err(Error::Config(format!(
            "the SVM kernel needs a symmetric divergence; '{divergence}' is not"
        )));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidInput("SVM training needs at least two classes".into()));
    }
    let gram = divergence_gram(divs, params.beta)?;
    let ratio = min_eig_ratio(&gram)?;
    let indefinite = ratio < -INDEFINITE_TOL;
    if indefinite {
        warn!(
            "training Gram is indefinite (min eigenvalue / trace = {ratio:e}){}",
            if params.clip_spectrum {
                "; clipping its spectrum"
            } else {
                ""
            }
        );
    }
    let gram = if params.clip_spectrum && ratio < 0.0 {
        clip_negative_spectrum(&gram)?
    } else {
        gram
    };
    let machines: Vec<BinarySvm> = classes
        .par_iter()
        .map(|&class| {
            let y: Vec<f64> = labels.iter().map(|&l| sign(l, class)).collect();
            let (alpha, bias, iterations, converged) = smo(&gram, &y, params);
            if !converged {
                warn!("SMO for class {class} stopped at the iteration cap without converging");
            }
            BinarySvm {
                class,
                alpha,
                bias,
                iterations,
                converged,
            }
        })
        .collect();
    Ok(SvmModel {
        divergence: divergence.to_string(),
        params: *params,
        classes,
        labels: labels.to_vec(),
        machines,
        gram_min_eig_ratio: ratio,
        indefinite,
        training: Vec::new(),
    })
}

/// Argmax of the decision values; ties go to the smallest class id.
pub fn svm_predict(model: &SvmModel, divergences: &[f64]) -> Result<usize> {
    let values = model.decision_values(divergences)?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(model.classes[best])
}

/// Dual solver for `min 1/2 a^T Q a - e^T a` s.t. `y^T a = 0`, `0 <= a <= C`,
/// `Q_ij = y_i y_j K_ij`, with maximal-violating-pair working sets.
/// Returns `(alpha, bias, iterations, converged)`.
fn smo(k: &DMatrix<f64>, y: &[f64], params: &SvmParams) -> (Vec<f64>, f64, usize, bool) {
    let n = y.len();
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
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

        let (ai, aj) = (alpha[i], alpha[j]);
        let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
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

        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[(i, t)] * di + y[j] * k[(j, t)] * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
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
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };
    (alpha, -rho, iterations, converged)
}
