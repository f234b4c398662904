//! Reproducing kernels on `R^n` and their Gram matrices.

use std::fmt;

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `x^T y`
    Linear,
    /// `(x^T y + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-||x - y||^2 / (2 sigma^2))`
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::Config("polynomial degree must be at least 1".into()));
                }
                if !(offset >= 0.0) || !offset.is_finite() {
                    return Err(Error::Config(format!(
                        "polynomial offset must be finite and non-negative, got {offset}"
                    )));
                }
                Ok(())
            }
            KernelSpec::Rbf { sigma } => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::Config(format!("rbf sigma must be positive, got {sigma}")));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel arguments have lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(self.eval_unchecked(x.iter().copied(), y.iter().copied()))
    }

    #[inline]
    fn eval_unchecked(&self, x: impl Iterator<Item = f64> + Clone, y: impl Iterator<Item = f64> + Clone) -> f64 {
        match *self {
            KernelSpec::Linear => x.zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Polynomial { degree, offset } => {
                let dot: f64 = x.zip(y).map(|(a, b)| a * b).sum();
                (dot + offset).powi(degree as i32)
            }
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = x.zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    #[inline]
    fn eval_columns(&self, x: DVectorView<'_, f64>, y: DVectorView<'_, f64>) -> f64 {
        self.eval_unchecked(x.iter().copied(), y.iter().copied())
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, offset } => {
                write!(f, "polynomial(degree={degree}, offset={offset})")
            }
            KernelSpec::Rbf { sigma } => write!(f, "rbf(sigma={sigma})"),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// `K[i, j] = k(x_i, y_j)` for the columns of `x` and `y`.
pub fn kernel_matrix(spec: &KernelSpec, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrix between dimension {} and dimension {} observations",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(DMatrix::from_fn(x.ncols(), y.ncols(), |i, j| {
        spec.eval_columns(x.column(i), y.column(j))
    }))
}

/// Gram matrix of one set; exactly symmetric.
pub fn gram_matrix(spec: &KernelSpec, x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.ncols();
    let mut k = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            let v = spec.eval_columns(x.column(i), x.column(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Median pairwise Euclidean distance over the pooled observations of `sets`.
/// At most `max_points` observations are used, picked with a fixed stride, so
/// the result is deterministic.
pub fn median_heuristic_sigma(sets: &[&ObservationSet], max_points: usize) -> Result<f64> {
    let total: usize = sets.iter().map(|s| s.len()).sum();
    if total < 2 {
        return Err(Error::InvalidInput(
            "median heuristic needs at least two observations".into(),
        ));
    }
    let stride = total.div_ceil(max_points.max(2));
    let mut points: Vec<DVectorView<'_, f64>> = Vec::new();
    let mut idx = 0usize;
    for set in sets {
        for col in set.matrix().column_iter() {
            if idx.is_multiple_of(stride) {
                points.push(col);
            }
            idx += 1;
        }
    }
    let mut dists = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = (a - b).norm();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::InvalidInput(
            "all observations coincide; median heuristic undefined".into(),
        ));
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*median)
}
