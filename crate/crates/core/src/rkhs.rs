//! Regularized covariance descriptors in the feature space of a kernel.
//!
//! A descriptor never materializes the (possibly infinite) feature-space
//! covariance. It keeps the observations, the top eigenvalues `lambdas` of the
//! centered Gram matrix `J^T K J`, and the coefficient matrix
//! `W = J V (I - rho Lambda^{-1})^{1/2}`. The implied operator is
//! `C = Phi W W^T Phi^T + rho I`: the retained eigenvalues of the sample
//! covariance are kept and everything else is replaced by `rho`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, KernelSpec};
use crate::spd::{sym_eig, ObservationSet};

/// How `rho` is chosen for a batch of descriptors. Divergences need a common
/// value, so the relative policy is resolved once over the whole batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum RhoPolicy {
    Fixed(f64),
    /// `rho = factor * mean retained eigenvalue` over the batch.
    Relative(f64),
}

impl Default for RhoPolicy {
    fn default() -> Self {
        RhoPolicy::Relative(1e-6)
    }
}

impl RhoPolicy {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            RhoPolicy::Fixed(v) | RhoPolicy::Relative(v) => v,
        };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("rho must be finite and non-negative, got {v}")));
        }
        Ok(())
    }
}

/// Eigendecomposition of the centered Gram matrix of one observation set,
/// before a rank and `rho` are chosen.
#[derive(Debug, Clone)]
pub struct CenteredSpectrum {
    kernel: KernelSpec,
    x: ObservationSet,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    numerical_rank: usize,
}

impl CenteredSpectrum {
    pub fn compute(kernel: &KernelSpec, x: &ObservationSet) -> Result<Self> {
        kernel.validate()?;
        let k = gram_matrix(kernel, x.matrix());
        let m = x.len();
        let centered = center_gram(&k) / m as f64;
        let eig = sym_eig(&centered)?;
        let numerical_rank = eig.numerical_rank();
        Ok(Self {
            kernel: *kernel,
            x: x.clone(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            numerical_rank,
        })
    }

    /// All eigenvalues of `J^T K J`, descending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    /// Rank actually kept for a request of `r`.
    pub fn retained_rank(&self, r: usize) -> usize {
        r.min(self.numerical_rank)
    }

    pub fn descriptor(&self, r: usize, rho: f64) -> Result<RkhsCovd> {
        if r < 1 {
            return Err(Error::InvalidInput("rank request must be at least 1".into()));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidInput(format!("rho must be non-negative, got {rho}")));
        }
        let rank = self.retained_rank(r);
        if rank == 0 {
            return Err(Error::InvalidInput(
                "centered Gram matrix is zero; observations carry no variance in feature space".into(),
            ));
        }
        if rank < r {
            warn!(
                "rank request {r} exceeds numerical rank {}; keeping {rank}",
                self.numerical_rank
            );
        }
        let lambdas = self.eigenvalues.rows(0, rank).into_owned();
        let smallest = lambdas[rank - 1];
        if rho > 0.0 && rho >= smallest {
            return Err(Error::RhoTooLarge { rho, smallest });
        }

        let m = self.x.len();
        let v = self.eigenvectors.columns(0, rank);
        // J V = m^{-3/2} (m V - 1 1^T V)
        let mf = m as f64;
        let scale = mf.powf(-1.5);
        let mut w = DMatrix::zeros(m, rank);
        for (k, col) in v.column_iter().enumerate() {
            let sum: f64 = col.sum();
            let shrink = (1.0 - rho / lambdas[k]).sqrt();
            for i in 0..m {
                w[(i, k)] = scale * (mf * col[i] - sum) * shrink;
            }
        }
        Ok(RkhsCovd {
            kernel: self.kernel,
            x: self.x.clone(),
            w,
            lambdas,
            rho,
        })
    }
}

/// `H K H` with `H = I - 1 1^T / m`, via row and column means.
fn center_gram(k: &DMatrix<f64>) -> DMatrix<f64> {
    let m = k.nrows();
    let mf = m as f64;
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).sum() / mf).collect();
    let total = row_means.iter().sum::<f64>() / mf;
    let mut c = DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_means[i] - row_means[j] + total);
    // exact symmetry
    for j in 0..m {
        for i in 0..j {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Implicit regularized covariance descriptor in the kernel feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsCovd {
    kernel: KernelSpec,
    x: ObservationSet,
    w: DMatrix<f64>,
    lambdas: DVector<f64>,
    rho: f64,
}

impl RkhsCovd {
    /// Reassembles a descriptor from stored parts, checking shapes, finiteness
    /// and eigenvalue ordering. The eigen-Gram identity is not re-verified
    /// here; see [`RkhsCovd::identity_residual`].
    pub fn from_parts(
        kernel: KernelSpec,
        x: ObservationSet,
        w: DMatrix<f64>,
        lambdas: DVector<f64>,
        rho: f64,
    ) -> Result<Self> {
        kernel.validate().map_err(|e| Error::InvalidInput(e.to_string()))?;
        let r = lambdas.len();
        if r == 0 || r > x.len() {
            return Err(Error::InvalidInput(format!("rank {r} outside 1..={}", x.len())));
        }
        if w.nrows() != x.len() || w.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "W is {}x{}, expected {}x{r}",
                w.nrows(),
                w.ncols(),
                x.len()
            )));
        }
        if w.iter().chain(lambdas.iter()).any(|v| !v.is_finite()) || !rho.is_finite() {
            return Err(Error::NonFinite("descriptor"));
        }
        if !(rho >= 0.0) {
            return Err(Error::InvalidInput(format!("rho must be non-negative, got {rho}")));
        }
        if lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("eigenvalues must be positive".into()));
        }
        if lambdas.as_slice().windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::InvalidInput("eigenvalues must be sorted descending".into()));
        }
        if rho > 0.0 && lambdas[r - 1] <= rho {
            return Err(Error::RhoTooLarge {
                rho,
                smallest: lambdas[r - 1],
            });
        }
        Ok(Self {
            kernel,
            x,
            w,
            lambdas,
            rho,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.x
    }

    /// `m x r` coefficient matrix.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    /// `W` rebuilt as if fitted with `rho = 0`, i.e. `J V`.
    pub fn unregularized_w(&self) -> DMatrix<f64> {
        if self.rho == 0.0 {
            return self.w.clone();
        }
        let mut w0 = self.w.clone();
        for (k, mut col) in w0.column_iter_mut().enumerate() {
            col /= (1.0 - self.rho / self.lambdas[k]).sqrt();
        }
        w0
    }

    /// `||W^T K W - (Lambda - rho I)||_F / ||Lambda||_F`.
    pub fn identity_residual(&self) -> f64 {
        let k = gram_matrix(&self.kernel, self.x.matrix());
        let mut resid = self.w.transpose() * k * &self.w;
        for i in 0..self.rank() {
            resid[(i, i)] -= self.lambdas[i] - self.rho;
        }
        resid.norm() / self.lambdas.norm()
    }
}

/// Fits one descriptor: eigendecompose `J^T K J`, keep the top
/// `min(r, numerical rank)` eigenpairs and form `W`.
pub fn fit_rkhs_covd(kernel: &KernelSpec, x: &ObservationSet, r: usize, rho: f64) -> Result<RkhsCovd> {
    CenteredSpectrum::compute(kernel, x)?.descriptor(r, rho)
}

/// Resolves `policy` to a concrete `rho` for a batch of spectra.
pub fn resolve_rho(spectra: &[CenteredSpectrum], r: usize, policy: RhoPolicy) -> Result<f64> {
    policy.validate()?;
    match policy {
        RhoPolicy::Fixed(v) => Ok(v),
        RhoPolicy::Relative(factor) => {
            let (sum, count) = spectra.iter().fold((0.0, 0usize), |(s, c), sp| {
                let k = sp.retained_rank(r);
                (s + sp.eigenvalues.rows(0, k).sum(), c + k)
            });
            if count == 0 {
                return Err(Error::InvalidInput(
                    "no positive eigenvalues to scale rho against".into(),
                ));
            }
            Ok(factor * sum / count as f64)
        }
    }
}

/// Fits a batch of descriptors in parallel with a common `rho`. Returns the
/// descriptors and the `rho` that was used.
pub fn fit_batch(
    kernel: &KernelSpec,
    sets: &[ObservationSet],
    r: usize,
    policy: RhoPolicy,
) -> Result<(Vec<RkhsCovd>, f64)> {
    let spectra = sets
        .par_iter()
        .enumerate()
        .map(|(i, x)| CenteredSpectrum::compute(kernel, x).map_err(|e| e.at_pair(i, i)))
        .collect::<Result<Vec<_>>>()?;
    let rho = resolve_rho(&spectra, r, policy)?;
    let descriptors = spectra
        .par_iter()
        .enumerate()
        .map(|(i, s)| s.descriptor(r, rho).map_err(|e| e.at_pair(i, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((descriptors, rho))
}
