//! Bregman divergences between [`RkhsCovd`] descriptors, evaluated through
//! kernel values only.
//!
//! With `C_XY = W_X^T K_{X,Y} W_Y` every expression reduces to quantities of
//! size `r_X x r_Y` or `(r_X + r_Y)`. The feature-space dimension cancels out
//! of all of them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{clamp_nonneg, DivergenceKind};
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, kernel_matrix};
use crate::rkhs::RkhsCovd;
use crate::spd::{cholesky, logdet_of_factor, symmetrize, SpdMatrix};

/// Relative clamp tolerance for kernel-side divergences.
pub const RKHS_CLAMP_TOL: f64 = 1e-8;

const RHO_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RkhsDivergence {
    /// Squared Frobenius distance.
    Euclidean,
    Burg,
    Jeffreys,
    Stein,
    /// `lim_{rho -> 0} 2 rho J`, evaluated with unregularized `W`.
    JeffreysHat,
    /// Stein divergence through the `rho I + M/2` form.
    SteinHat,
}

impl RkhsDivergence {
    pub const ALL: [RkhsDivergence; 6] = [
        RkhsDivergence::Euclidean,
        RkhsDivergence::Burg,
        RkhsDivergence::Jeffreys,
        RkhsDivergence::Stein,
        RkhsDivergence::JeffreysHat,
        RkhsDivergence::SteinHat,
    ];

    /// Kernel-side counterpart of an observation-space divergence. With
    /// `practical`, Jeffreys and Stein map to their `rho`-robust forms.
    pub fn from_kind(kind: DivergenceKind, practical: bool) -> Self {
        match (kind, practical) {
            (DivergenceKind::Frobenius, _) => RkhsDivergence::Euclidean,
            (DivergenceKind::Burg, _) => RkhsDivergence::Burg,
            (DivergenceKind::Jeffreys, false) => RkhsDivergence::Jeffreys,
            (DivergenceKind::Jeffreys, true) => RkhsDivergence::JeffreysHat,
            (DivergenceKind::Stein, false) => RkhsDivergence::Stein,
            (DivergenceKind::Stein, true) => RkhsDivergence::SteinHat,
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, RkhsDivergence::Burg)
    }

    pub fn evaluate(self, a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
        match self {
            RkhsDivergence::Euclidean => euclidean_sq_h(a, b),
            RkhsDivergence::Burg => burg_h(a, b),
            RkhsDivergence::Jeffreys => jeffreys_h(a, b),
            RkhsDivergence::Stein => stein_h(a, b),
            RkhsDivergence::JeffreysHat => jeffreys_h_hat(a, b),
            RkhsDivergence::SteinHat => stein_h_hat(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RkhsDivergence::Euclidean => "euclidean",
            RkhsDivergence::Burg => "burg",
            RkhsDivergence::Jeffreys => "jeffreys",
            RkhsDivergence::Stein => "stein",
            RkhsDivergence::JeffreysHat => "jeffreys_hat",
            RkhsDivergence::SteinHat => "stein_hat",
        }
    }
}

impl fmt::Display for RkhsDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RkhsDivergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RkhsDivergence::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown RKHS divergence '{s}'")))
    }
}

/// A dissimilarity between descriptors of type `D`.
pub trait Divergence<D>: Sync {
    fn divergence(&self, a: &D, b: &D) -> Result<f64>;
    fn symmetric(&self) -> bool;
}

impl Divergence<SpdMatrix> for DivergenceKind {
    fn divergence(&self, a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
        self.evaluate(a, b)
    }

    fn symmetric(&self) -> bool {
        self.is_symmetric()
    }
}

impl Divergence<RkhsCovd> for RkhsDivergence {
    fn divergence(&self, a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
        self.evaluate(a, b)
    }

    fn symmetric(&self) -> bool {
        self.is_symmetric()
    }
}

fn check_kernel(a: &RkhsCovd, b: &RkhsCovd) -> Result<()> {
    if a.kernel() != b.kernel() {
        return Err(Error::KernelMismatch);
    }
    if a.observations().dim() != b.observations().dim() {
        return Err(Error::DimensionMismatch(format!(
            "observations of dimension {} and {}",
            a.observations().dim(),
            b.observations().dim()
        )));
    }
    Ok(())
}

fn common_rho(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    let (ra, rb) = (a.rho(), b.rho());
    if (ra - rb).abs() > RHO_MATCH_TOL * ra.abs().max(rb.abs()) {
        return Err(Error::RhoMismatch(ra, rb));
    }
    Ok(ra)
}

fn positive_rho(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    let rho = common_rho(a, b)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(
            "log-determinant divergences need descriptors fitted with rho > 0".into(),
        ));
    }
    Ok(rho)
}

/// `W_X^T K_{X,Y} W_Y`.
pub fn cross_block(a: &RkhsCovd, b: &RkhsCovd) -> Result<DMatrix<f64>> {
    let k = kernel_matrix(a.kernel(), a.observations().matrix(), b.observations().matrix())?;
    Ok(a.w().transpose() * (k * b.w()))
}

/// `sum_ij C_ij^2 / lambda_j`, i.e. `Tr(C Lambda^{-1} C^T)`.
fn weighted_trace(c: &DMatrix<f64>, lambdas: &DVector<f64>) -> f64 {
    c.column_iter()
        .zip(lambdas.iter())
        .map(|(col, l)| col.norm_squared() / l)
        .sum()
}

fn sum_log_ratio(lambdas: &DVector<f64>, rho: f64) -> f64 {
    lambdas.iter().map(|l| (l / rho).ln()).sum()
}

/// `||C_X - C_Y||_F^2` for the unregularized parts; `rho` may be zero.
pub fn euclidean_sq_h(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    let rho = common_rho(a, b)?;
    let c = cross_block(a, b)?;
    let sa: f64 = a.lambdas().iter().map(|l| (l - rho).powi(2)).sum();
    let sb: f64 = b.lambdas().iter().map(|l| (l - rho).powi(2)).sum();
    let value = sa + sb - 2.0 * c.norm_squared();
    clamp_nonneg(value, sa + sb, RKHS_CLAMP_TOL, "rkhs euclidean distance")
}

/// Burg divergence `B(C_X, C_Y)` between the regularized descriptors.
pub fn burg_h(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    let rho = positive_rho(a, b)?;
    let c = cross_block(a, b)?;
    let (la, lb) = (a.lambdas(), b.lambdas());
    let t_x: f64 = la.iter().map(|l| l / rho - 1.0).sum();
    let t_y: f64 = lb.iter().map(|l| 1.0 - rho / l).sum();
    let t_cross = weighted_trace(&c, lb) / rho;
    let t_log = sum_log_ratio(lb, rho) - sum_log_ratio(la, rho);
    let value = t_x - t_y - t_cross + t_log;
    let scale = t_x.abs() + t_cross.abs() + t_log.abs();
    clamp_nonneg(value, scale, RKHS_CLAMP_TOL, "rkhs burg divergence")
}

/// `Tr(C_X C_Y^{-1}) - |H|`, the dimension-free part of the trace term.
pub fn trace_cross_h(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    let rho = positive_rho(a, b)?;
    let c = cross_block(a, b)?;
    let t_x: f64 = a.lambdas().iter().map(|l| l / rho - 1.0).sum();
    let t_y: f64 = b.lambdas().iter().map(|l| 1.0 - rho / l).sum();
    Ok(t_x - weighted_trace(&c, b.lambdas()) / rho - t_y)
}

/// Jeffreys divergence: the symmetrized Burg divergence, written out as a
/// single expression.
pub fn jeffreys_h(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    let rho = positive_rho(a, b)?;
    let c = cross_block(a, b)?;
    let (la, lb) = (a.lambdas(), b.lambdas());
    let half = 0.5 / rho;
    let t_x = half * la.iter().map(|l| l - rho).sum::<f64>();
    let t_y = half * lb.iter().map(|l| l - rho).sum::<f64>();
    let cross_xy = half * weighted_trace(&c, lb);
    let cross_yx = half * weighted_trace(&c.transpose(), la);
    let u_x = 0.5 * la.iter().map(|l| 1.0 - rho / l).sum::<f64>();
    let u_y = 0.5 * lb.iter().map(|l| 1.0 - rho / l).sum::<f64>();
    let value = t_x + t_y - cross_xy - cross_yx - u_x - u_y;
    clamp_nonneg(value, t_x + t_y, RKHS_CLAMP_TOL, "rkhs jeffreys divergence")
}

/// The block Gram matrix of a descriptor pair and the block-diagonal
/// coefficient matrix `Q = diag(W_X, W_Y)`.
#[derive(Debug, Clone)]
pub struct BlockGram {
    pub full: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl BlockGram {
    pub fn new(a: &RkhsCovd, b: &RkhsCovd) -> Result<Self> {
        check_kernel(a, b)?;
        let (ma, mb) = (a.observations().len(), b.observations().len());
        let (ra, rb) = (a.rank(), b.rank());
        let kernel = a.kernel();
        let kxy = kernel_matrix(kernel, a.observations().matrix(), b.observations().matrix())?;
        let mut full = DMatrix::zeros(ma + mb, ma + mb);
        full.view_mut((0, 0), (ma, ma))
            .copy_from(&gram_matrix(kernel, a.observations().matrix()));
        full.view_mut((ma, ma), (mb, mb))
            .copy_from(&gram_matrix(kernel, b.observations().matrix()));
        full.view_mut((0, ma), (ma, mb)).copy_from(&kxy);
        full.view_mut((ma, 0), (mb, ma)).copy_from(&kxy.transpose());
        let mut q = DMatrix::zeros(ma + mb, ra + rb);
        q.view_mut((0, 0), (ma, ra)).copy_from(a.w());
        q.view_mut((ma, ra), (mb, rb)).copy_from(b.w());
        Ok(Self { full, q })
    }

    /// `Q^T K Q`, symmetrized.
    pub fn reduced(&self) -> DMatrix<f64> {
        symmetrize(&(self.q.transpose() * &self.full * &self.q))
    }
}

/// `logdet` with a single `1e-12 * trace` jitter retry.
fn logdet_with_jitter(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    match cholesky(m, what) {
        Ok(c) => Ok(logdet_of_factor(&c)),
        Err(Error::CholeskyFailure(_)) => {
            let n = m.nrows();
            let jitter = 1e-12 * m.trace().abs().max(f64::MIN_POSITIVE);
            let shifted = m + DMatrix::identity(n, n) * jitter;
            Ok(logdet_of_factor(&cholesky(&shifted, what)?))
        }
        Err(e) => Err(e),
    }
}

/// Stein divergence in its reference form,
/// `logdet(I + Q^T K Q / (2 rho)) - 1/2 logdet(Lambda_X / rho) - 1/2 logdet(Lambda_Y / rho)`,
/// with the full block Gram matrix. Handles unequal ranks. For small `rho`
/// the `1/(2 rho)` scaling is badly conditioned; [`stein_h_hat`] is the
/// numerically safe route.
pub fn stein_h(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    let rho = positive_rho(a, b)?;
    let block = BlockGram::new(a, b)?;
    let mut inner = block.reduced() / (2.0 * rho);
    for i in 0..inner.nrows() {
        inner[(i, i)] += 1.0;
    }
    let ld = logdet_with_jitter(&inner, "I + Q^T K Q / (2 rho)")?;
    let lx = 0.5 * sum_log_ratio(a.lambdas(), rho);
    let ly = 0.5 * sum_log_ratio(b.lambdas(), rho);
    let scale = ld.abs() + lx.abs() + ly.abs();
    clamp_nonneg(ld - lx - ly, scale, RKHS_CLAMP_TOL, "rkhs stein divergence")
}

/// Stein divergence through `logdet(rho I + M/2)` with
/// `M = [[Lambda_X - rho I, C_XY], [C_XY^T, Lambda_Y - rho I]]`, which never
/// divides by `rho`. The `(r_X + r_Y)/2 * log rho` term that turns this into
/// the same value as [`stein_h`] is subtracted explicitly, so self-divergence
/// is zero. Both descriptors must keep the same number of eigenpairs.
pub fn stein_h_hat(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    if a.rank() != b.rank() {
        return Err(Error::RankMismatch(a.rank(), b.rank()));
    }
    let rho = positive_rho(a, b)?;
    let c = cross_block(a, b)?;
    let r = a.rank();
    let mut m = DMatrix::zeros(2 * r, 2 * r);
    for i in 0..r {
        m[(i, i)] = rho + 0.5 * (a.lambdas()[i] - rho);
        m[(r + i, r + i)] = rho + 0.5 * (b.lambdas()[i] - rho);
    }
    let half_c = &c * 0.5;
    m.view_mut((0, r), (r, r)).copy_from(&half_c);
    m.view_mut((r, 0), (r, r)).copy_from(&half_c.transpose());
    let ld = logdet_with_jitter(&m, "rho I + M / 2")?;
    let lx = 0.5 * a.lambdas().iter().map(|l| l.ln()).sum::<f64>();
    let ly = 0.5 * b.lambdas().iter().map(|l| l.ln()).sum::<f64>();
    let offset = r as f64 * rho.ln();
    let value = ld - lx - ly - offset;
    let scale = ld.abs() + lx.abs() + ly.abs() + offset.abs();
    clamp_nonneg(value, scale, RKHS_CLAMP_TOL, "rkhs stein divergence (practical form)")
}

/// `Tr L_X + Tr L_Y - Tr(C L_Y^{-1} C^T) - Tr(C^T L_X^{-1} C)` with `C` built
/// from the unregularized coefficients `J V`, independent of the fitted `rho`.
pub fn jeffreys_h_hat(a: &RkhsCovd, b: &RkhsCovd) -> Result<f64> {
    check_kernel(a, b)?;
    let k = kernel_matrix(a.kernel(), a.observations().matrix(), b.observations().matrix())?;
    let c = a.unregularized_w().transpose() * (k * b.unregularized_w());
    let (la, lb) = (a.lambdas(), b.lambdas());
    let tr = la.sum() + lb.sum();
    let value = tr - weighted_trace(&c, lb) - weighted_trace(&c.transpose(), la);
    clamp_nonneg(value, tr, RKHS_CLAMP_TOL, "rkhs jeffreys divergence (practical form)")
}

/// Square table of pairwise divergences, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DivergenceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("divergence matrix is not square".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("divergence matrix"));
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.values)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Sub-table on the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> DivergenceMatrix {
        let values = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        DivergenceMatrix { n: idx.len(), values }
    }

    /// CSV with no header, one row per line, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|v| format_f64(*v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_numeric_csv(text, "divergence matrix")?;
        Self::from_rows(rows)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_numeric_csv(text: &str, context: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, line)| {
            line.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(format!("{context}, line {}", lineno + 1), e))
                })
                .collect()
        })
        .collect()
}

/// All pairwise divergences of `items`. Symmetric divergences are evaluated
/// once per unordered pair and mirrored; the diagonal is zero. Work is spread
/// over the rayon pool, and the result does not depend on scheduling.
pub fn divergence_matrix<D: Sync, M: Divergence<D>>(items: &[D], measure: &M) -> Result<DivergenceMatrix> {
    let n = items.len();
    let symmetric = measure.symmetric();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| if symmetric { i < j } else { i != j })
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| measure.divergence(&items[i], &items[j]).map_err(|e| e.at_pair(i, j)))
        .collect::<Result<Vec<f64>>>()?;
    let mut table = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        table[i * n + j] = v;
        if symmetric {
            table[j * n + i] = v;
        }
    }
    Ok(DivergenceMatrix { n, values: table })
}

/// `out[q][t] = d(queries[q], train[t])`, row-major in query order.
pub fn cross_divergences<D: Sync, M: Divergence<D>>(queries: &[D], train: &[D], measure: &M) -> Result<Vec<Vec<f64>>> {
    queries
        .par_iter()
        .enumerate()
        .map(|(q, query)| {
            train
                .iter()
                .enumerate()
                .map(|(t, item)| measure.divergence(query, item).map_err(|e| e.at_pair(q, t)))
                .collect()
        })
        .collect()
}
