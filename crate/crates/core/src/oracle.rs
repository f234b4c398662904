//! Brute-force references in an explicit, finite feature space.
//!
//! For linear and polynomial kernels the feature map is materialized and
//! covariance operators become ordinary matrices, so every kernel-side
//! quantity has a direct counterpart computed without `W`, `Lambda` or any
//! Gram-matrix shortcut.

use nalgebra::{DMatrix, DVector};

use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rkhs::RkhsCovd;
use crate::spd::{sym_eig, symmetrize, ObservationSet, SpdMatrix};

/// Largest feature dimension that will be materialized.
pub const MAX_FEATURE_DIM: usize = 512;

/// A kernel with a finite explicit feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMapKernel {
    base: KernelSpec,
    input_dim: usize,
    // (multi-index, sqrt weight) per feature
    monomials: Vec<(Vec<u32>, f64)>,
}

impl ExplicitMapKernel {
    pub fn new(base: KernelSpec, input_dim: usize) -> Result<Self> {
        base.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidInput("input dimension must be positive".into()));
        }
        let (degree, offset) = match base {
            KernelSpec::Linear => (1, 0.0),
            KernelSpec::Polynomial { degree, offset } => (degree, offset),
            KernelSpec::Rbf { .. } => return Err(Error::UnsupportedKernel(base.to_string())),
        };
        let dim = feature_dim(input_dim, degree, offset > 0.0);
        if dim > MAX_FEATURE_DIM {
            return Err(Error::FeatureDimTooLarge {
                dim,
                cap: MAX_FEATURE_DIM,
            });
        }
        let lowest = if offset > 0.0 { 0 } else { degree };
        let mut monomials = Vec::with_capacity(dim);
        for total in (lowest..=degree).rev() {
            for alpha in multi_indices(input_dim, total) {
                let coeff = multinomial(degree, &alpha) * offset.powi((degree - total) as i32);
                monomials.push((alpha, coeff.sqrt()));
            }
        }
        debug_assert_eq!(monomials.len(), dim);
        Ok(Self {
            base,
            input_dim,
            monomials,
        })
    }

    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.monomials.len()
    }
}

/// `C(n + d, d)` with a constant offset, `C(n + d - 1, d)` without.
pub fn feature_dim(n: usize, degree: u32, with_offset: bool) -> usize {
    let d = degree as usize;
    if with_offset {
        binomial(n + d, d)
    } else {
        binomial(n + d - 1, d)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// `d! / (alpha_1! ... alpha_n! (d - |alpha|)!)`
fn multinomial(d: u32, alpha: &[u32]) -> f64 {
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    let total: u32 = alpha.iter().sum();
    fact(d) / (alpha.iter().map(|&a| fact(a)).product::<f64>() * fact(d - total))
}

/// All `alpha` in `N^n` with `|alpha| = total`, first component descending.
fn multi_indices(n: usize, total: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in multi_indices(n - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn explicit_feature_map(k: &ExplicitMapKernel, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != k.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "feature map for dimension {} applied to a vector of length {}",
            k.input_dim,
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature map input"));
    }
    Ok(DVector::from_iterator(
        k.monomials.len(),
        k.monomials
            .iter()
            .map(|(alpha, w)| w * alpha.iter().zip(x).map(|(&a, &xi)| xi.powi(a as i32)).product::<f64>()),
    ))
}

/// `Phi`, one feature column per observation.
pub fn feature_matrix(k: &ExplicitMapKernel, x: &ObservationSet) -> Result<DMatrix<f64>> {
    let cols = x
        .matrix()
        .column_iter()
        .map(|c| explicit_feature_map(k, c.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Covariance of the mapped observations, `Phi J J^T Phi^T`.
pub fn feature_covariance(k: &ExplicitMapKernel, x: &ObservationSet) -> Result<DMatrix<f64>> {
    let phi = feature_matrix(k, x)?;
    let m = phi.ncols() as f64;
    let mean = phi.column_sum() / m;
    let mut centered = phi;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    Ok(symmetrize(&(&centered * centered.transpose() / m)))
}

/// The regularized rank-`r` descriptor built in feature space: the top `r`
/// eigenpairs of the feature covariance are kept and every other eigenvalue
/// is set to `rho`.
pub fn explicit_rkhs_covariance(k: &ExplicitMapKernel, x: &ObservationSet, r: usize, rho: f64) -> Result<SpdMatrix> {
    let cov = feature_covariance(k, x)?;
    let dim = cov.nrows();
    let eig = sym_eig(&cov)?;
    let r = r.min(dim);
    let u = eig.eigenvectors.columns(0, r);
    let mut out = DMatrix::identity(dim, dim) * rho;
    for i in 0..r {
        let col = u.column(i);
        out += (col * col.transpose()) * (eig.eigenvalues[i] - rho);
    }
    SpdMatrix::new(symmetrize(&out))
}

/// `Phi W W^T Phi^T + rho I` for a fitted descriptor, using its own `W`.
pub fn materialize_descriptor(k: &ExplicitMapKernel, d: &RkhsCovd) -> Result<SpdMatrix> {
    if k.base() != d.kernel() {
        return Err(Error::KernelMismatch);
    }
    let pw = feature_matrix(k, d.observations())? * d.w();
    let dim = pw.nrows();
    SpdMatrix::new(symmetrize(
        &(&pw * pw.transpose() + DMatrix::identity(dim, dim) * d.rho()),
    ))
}

/// Reference divergence on materialized covariances.
pub fn explicit_divergence(kind: DivergenceKind, c1: &SpdMatrix, c2: &SpdMatrix) -> Result<f64> {
    kind.evaluate(c1, c2)
}

/// `Tr C_X + Tr C_Y - Tr(C_X P_Y) - Tr(C_Y P_X)` where `C` is the rank-`r`
/// truncated feature covariance and `P` projects onto its range: the
/// `rho -> 0` limit of `2 rho J`.
pub fn explicit_jeffreys_limit(k: &ExplicitMapKernel, x: &ObservationSet, y: &ObservationSet, r: usize) -> Result<f64> {
    let truncated = |s: &ObservationSet| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let eig = sym_eig(&feature_covariance(k, s)?)?;
        let r = r.min(eig.len());
        let u = eig.eigenvectors.columns(0, r).into_owned();
        let l = DMatrix::from_diagonal(&eig.eigenvalues.rows(0, r).into_owned());
        let c = &u * l * u.transpose();
        let p = &u * u.transpose();
        Ok((c, p))
    };
    let (cx, px) = truncated(x)?;
    let (cy, py) = truncated(y)?;
    Ok(cx.trace() + cy.trace() - (&cx * py).trace() - (&cy * px).trace())
}
