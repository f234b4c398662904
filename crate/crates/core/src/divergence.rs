//! Bregman divergences between SPD matrices and the Gaussian kernels built on
//! top of the symmetric ones.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{cholesky, logdet_of_factor, SpdMatrix};

/// Negative results down to `-CLAMP_TOL * max(1, scale)` are rounding noise and
/// are reported as zero.
pub const CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// Squared Frobenius distance.
    #[serde(alias = "frobenius_sq", alias = "euclidean")]
    Frobenius,
    Burg,
    Jeffreys,
    Stein,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 4] = [
        DivergenceKind::Frobenius,
        DivergenceKind::Burg,
        DivergenceKind::Jeffreys,
        DivergenceKind::Stein,
    ];

    pub fn is_symmetric(self) -> bool {
        !matches!(self, DivergenceKind::Burg)
    }

    pub fn evaluate(self, a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
        match self {
            DivergenceKind::Frobenius => frobenius_sq(a, b),
            DivergenceKind::Burg => burg(a, b),
            DivergenceKind::Jeffreys => jeffreys(a, b),
            DivergenceKind::Stein => stein(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Frobenius => "frobenius",
            DivergenceKind::Burg => "burg",
            DivergenceKind::Jeffreys => "jeffreys",
            DivergenceKind::Stein => "stein",
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frobenius" | "frobenius_sq" | "euclidean" => Ok(DivergenceKind::Frobenius),
            "burg" => Ok(DivergenceKind::Burg),
            "jeffreys" => Ok(DivergenceKind::Jeffreys),
            "stein" => Ok(DivergenceKind::Stein),
            other => Err(Error::Config(format!("unknown divergence '{other}'"))),
        }
    }
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "divergence between {}x{} and {}x{} matrices",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Maps small negative round-off to zero, rejects anything more negative.
pub(crate) fn clamp_nonneg(value: f64, scale: f64, rel_tol: f64, what: &'static str) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NumericConsistency {
            what,
            value,
            tolerance: 0.0,
        });
    }
    if value >= 0.0 {
        return Ok(value);
    }
    let tolerance = rel_tol * scale.abs().max(1.0);
    if value >= -tolerance {
        Ok(0.0)
    } else {
        Err(Error::NumericConsistency { what, value, tolerance })
    }
}

/// `||C1 - C2||_F^2`. Defined for semidefinite inputs too.
pub fn frobenius_sq(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok((a.matrix() - b.matrix()).norm_squared())
}

/// `||L_b^{-1} L_a||_F^2 = Tr(C_b^{-1} C_a)` from two lower Cholesky factors.
fn trace_of_solve(l_a: &DMatrix<f64>, l_b: &DMatrix<f64>) -> f64 {
    let solved = l_b
        .solve_lower_triangular(l_a)
        .expect("cholesky factor has a positive diagonal");
    solved.norm_squared()
}

/// `Tr(C1 C2^{-1}) - logdet(C1 C2^{-1}) - n`.
pub fn burg(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let ca = cholesky(a.matrix(), "first argument")?;
    let cb = cholesky(b.matrix(), "second argument")?;
    let tr = trace_of_solve(&ca.l(), &cb.l());
    let ld = logdet_of_factor(&ca) - logdet_of_factor(&cb);
    let n = a.dim() as f64;
    clamp_nonneg(tr - ld - n, tr.max(ld.abs()), CLAMP_TOL, "burg divergence")
}

/// `1/2 Tr(C1 C2^{-1}) + 1/2 Tr(C2 C1^{-1}) - n`.
pub fn jeffreys(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let ca = cholesky(a.matrix(), "first argument")?;
    let cb = cholesky(b.matrix(), "second argument")?;
    let (la, lb) = (&ca.l(), &cb.l());
    let t_ab = trace_of_solve(la, lb);
    let t_ba = trace_of_solve(lb, la);
    let n = a.dim() as f64;
    clamp_nonneg(0.5 * (t_ab + t_ba) - n, t_ab + t_ba, CLAMP_TOL, "jeffreys divergence")
}

/// `logdet((C1 + C2)/2) - 1/2 logdet(C1) - 1/2 logdet(C2)`.
pub fn stein(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let ld_a = logdet_of_factor(&cholesky(a.matrix(), "first argument")?);
    let ld_b = logdet_of_factor(&cholesky(b.matrix(), "second argument")?);
    let mid = (a.matrix() + b.matrix()) * 0.5;
    let ld_mid = logdet_of_factor(&cholesky(&mid, "midpoint")?);
    let scale = ld_mid.abs().max(ld_a.abs()).max(ld_b.abs());
    clamp_nonneg(ld_mid - 0.5 * ld_a - 0.5 * ld_b, scale, CLAMP_TOL, "stein divergence")
}

/// Whether `exp(-beta S)` is a positive definite kernel on `n x n` SPD
/// matrices: `beta` in `{1/2, 1, ..., (n-1)/2}` or `beta > (n-1)/2`.
pub fn is_valid_stein_beta(n: usize, beta: f64) -> bool {
    if !(beta > 0.0) || !beta.is_finite() || n == 0 {
        return false;
    }
    let bound = 0.5 * (n as f64 - 1.0);
    if beta > bound {
        return true;
    }
    let twice = 2.0 * beta;
    (twice - twice.round()).abs() <= 1e-12 && twice.round() >= 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelDivergence {
    Jeffreys,
    Stein,
}

/// `k(C1, C2) = exp(-beta d(C1, C2))` for the Jeffreys or Stein divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceKernelSpec {
    pub kind: KernelDivergence,
    pub beta: f64,
}

impl DivergenceKernelSpec {
    pub fn new(kind: KernelDivergence, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("kernel beta must be positive, got {beta}")));
        }
        Ok(Self { kind, beta })
    }

    /// Checks the Stein validity set for matrices of dimension `dim`
    /// (`None` for an infinite-dimensional feature space). Jeffreys kernels
    /// always pass. With `force` the check is skipped.
    pub fn check(&self, dim: Option<usize>, force: bool) -> Result<()> {
        if force || self.kind == KernelDivergence::Jeffreys {
            return Ok(());
        }
        let ok = match dim {
            Some(n) => is_valid_stein_beta(n, self.beta),
            None => {
                let twice = 2.0 * self.beta;
                (twice - twice.round()).abs() <= 1e-12 && twice.round() >= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SteinBetaInvalid {
                n: dim.unwrap_or(usize::MAX),
                beta: self.beta,
            })
        }
    }

    pub fn eval(&self, divergence: f64) -> Result<f64> {
        divergence_gaussian_kernel(divergence, self.beta)
    }
}

/// `exp(-beta d)`; equals 1 exactly when `d = 0`.
pub fn divergence_gaussian_kernel(d: f64, beta: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::InvalidInput(format!("divergence must be non-negative, got {d}")));
    }
    Ok((-beta * d).exp())
}
