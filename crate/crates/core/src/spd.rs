//! Dense symmetric linear algebra and finite-dimensional covariance descriptors.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Observations are stored
//! column-wise: an [`ObservationSet`] of `m` samples in `R^n` is an `n x m`
//! matrix. Log-determinants are always taken through a Cholesky factor and
//! never through an explicit determinant.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold below which an eigenvalue counts as zero:
/// `lambda > RANK_EPS * lambda_max` is "positive".
pub const RANK_EPS: f64 = 1e-10;

/// Relative asymmetry accepted by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// `m` observations of dimension `n`, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    data: DMatrix<f64>,
}

impl ObservationSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 1 {
            return Err(Error::InvalidInput("observation dimension n must be at least 1".into()));
        }
        if data.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {}",
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation set"));
        }
        Ok(Self { data })
    }

    /// Builds a set from row-major observations (one inner slice per sample).
    pub fn from_observations(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "observation {bad} has {} values, expected {n}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| rows[j][i]))
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// A symmetric matrix, positive (semi)definite where an operation needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    data: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates squareness, finiteness and symmetry, then stores the exactly
    /// symmetrized matrix.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let scale = data.amax();
        let asym = (&data - data.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (max |A - A^T| = {asym:e})"
            )));
        }
        Ok(Self {
            data: symmetrize(&data),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// `A C A^T`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMatrix> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "transform has {} columns, matrix is {}x{}",
                a.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(Self {
            data: symmetrize(&(a * &self.data * a.transpose())),
        })
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of eigenvalues above `RANK_EPS * lambda_max`.
    pub fn numerical_rank(&self) -> usize {
        let max = self.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
        if max <= 0.0 {
            return 0;
        }
        self.eigenvalues.iter().take_while(|&&l| l > RANK_EPS * max).count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `J = m^{-3/2} (m I - 1 1^T)`, so that `X J J^T X^T` is the (1/m)-normalized
/// covariance of the columns of `X`.
pub fn centering_matrix(m: usize) -> DMatrix<f64> {
    let mf = m as f64;
    let scale = mf.powf(-1.5);
    DMatrix::from_fn(m, m, |i, j| {
        let v = if i == j { mf - 1.0 } else { -1.0 };
        scale * v
    })
}

/// Sample covariance `(1/m) sum (x_i - mu)(x_i - mu)^T`.
pub fn covariance_descriptor(x: &ObservationSet) -> SpdMatrix {
    let data = x.matrix();
    let m = data.ncols() as f64;
    let mean = data.column_sum() / m;
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.transpose() / m;
    SpdMatrix { data: symmetrize(&cov) }
}

/// Symmetric eigendecomposition with descending eigenvalues and a fixed sign
/// convention: the largest-magnitude entry of each eigenvector is positive.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigDecomposition> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let n = a.nrows();
    let sym = symmetrize(a);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 1000 * n.max(10)).ok_or(Error::EigenNonConvergence(n))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iamax();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.set_column(dst, &(col * sign));
    }
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Cholesky factor of the symmetrized input; `what` names the argument in the
/// error.
pub(crate) fn cholesky(a: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let chol = Cholesky::new(symmetrize(a)).ok_or(Error::CholeskyFailure(what))?;
    if chol.l_dirty().diagonal().iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::CholeskyFailure(what));
    }
    Ok(chol)
}

pub(crate) fn logdet_of_factor(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `log det A` for symmetric positive definite `A`, as `2 sum log L_ii`.
pub fn cholesky_logdet(a: &SpdMatrix) -> Result<f64> {
    logdet(a.matrix(), "matrix")
}

pub(crate) fn logdet(a: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    Ok(logdet_of_factor(&cholesky(a, what)?))
}

pub fn spd_inverse(a: &SpdMatrix) -> Result<SpdMatrix> {
    let chol = cholesky(a.matrix(), "matrix")?;
    Ok(SpdMatrix {
        data: symmetrize(&chol.inverse()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SpdMatrix {
        let a = random_matrix(rng, n, n);
        SpdMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
    }

    #[test]
    fn covariance_of_hand_example() {
        let x = ObservationSet::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0])).unwrap();
        let c = covariance_descriptor(&x);
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn identical_columns_give_zero_covariance() {
        let x = ObservationSet::new(DMatrix::from_fn(3, 7, |i, _| i as f64 + 0.5)).unwrap();
        assert!(covariance_descriptor(&x).matrix().amax() == 0.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn covariance_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 3, 20);
        let c = covariance_descriptor(&ObservationSet::new(x.clone()).unwrap());

        // independent loop over outer products
        let m = x.ncols();
        let mut mu = [0.0; 3];
        for j in 0..m {
            for i in 0..3 {
                mu[i] += x[(i, j)] / m as f64;
            }
        }
        let mut oracle = [[0.0; 3]; 3];
        for j in 0..m {
            for a in 0..3 {
                for b in 0..3 {
                    oracle[a][b] += (x[(a, j)] - mu[a]) * (x[(b, j)] - mu[b]) / m as f64;
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                assert!((c.matrix()[(a, b)] - oracle[a][b]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matrix_form_with_centering_matrix_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let m = rng.random_range(2..30);
            let x = random_matrix(&mut rng, n, m);
            let j = centering_matrix(m);
            let via_j = &x * &j * j.transpose() * x.transpose();
            let c = covariance_descriptor(&ObservationSet::new(x).unwrap());
            let scale = c.matrix().amax().max(f64::MIN_POSITIVE);
            assert!((via_j - c.matrix()).amax() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn centering_matrix_small_cases() {
        assert_eq!(centering_matrix(1), DMatrix::from_element(1, 1, 0.0));
        let s = 2f64.powf(-1.5);
        let expect = DMatrix::from_row_slice(2, 2, &[s, -s, -s, s]);
        assert!((centering_matrix(2) - expect).amax() < 1e-15);
    }

    #[test]
    fn centering_matrix_square_is_scaled_projector() {
        for m in 1..12 {
            let j = centering_matrix(m);
            let mf = m as f64;
            let expect = (DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / mf)) / mf;
            assert!((&j * j.transpose() - expect).amax() < 1e-14);
        }
    }

    #[test]
    fn eig_of_diagonal_is_sorted() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[3.0, 2.0, 1.0]);
        let e = sym_eig(&DMatrix::identity(4, 4)).unwrap();
        assert!(e.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eig_residual_orthonormality_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(&mut rng, 5, 5);
        let a = symmetrize(&b);
        let e = sym_eig(&a).unwrap();
        for i in 0..5 {
            let v = e.eigenvectors.column(i);
            assert!((&a * v - v * e.eigenvalues[i]).amax() < 1e-9);
            assert!(v[v.iamax()] > 0.0);
        }
        let k = e.len() as f64;
        let gram = e.eigenvectors.transpose() * &e.eigenvectors;
        assert!((gram - DMatrix::identity(5, 5)).norm() <= 1e-10 * k);
        assert!((e.reconstruct() - &a).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn covariance_spectrum_matches_centered_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 4, 9);
        let c = covariance_descriptor(&ObservationSet::new(x.clone()).unwrap());
        let j = centering_matrix(9);
        let small = sym_eig(c.matrix()).unwrap();
        let big = sym_eig(&(j.transpose() * x.transpose() * &x * &j)).unwrap();
        for i in 0..4 {
            assert!((small.eigenvalues[i] - big.eigenvalues[i]).abs() < 1e-9);
        }
        for i in 4..9 {
            assert!(big.eigenvalues[i].abs() < 1e-9);
        }
        assert!(small.eigenvalues.min() >= -1e-10 * small.eigenvalues.max());
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(cholesky_logdet(&SpdMatrix::identity(3)).unwrap(), 0.0);
        let d = cholesky_logdet(&SpdMatrix::from_diagonal(&[2.0, 2.0]).unwrap()).unwrap();
        assert_relative_eq!(d, 2.0 * 2f64.ln(), epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(&mut rng, 4);
        let by_eig: f64 = sym_eig(a.matrix()).unwrap().eigenvalues.iter().map(|l| l.ln()).sum();
        assert!((cholesky_logdet(&a).unwrap() - by_eig).abs() < 1e-10);
    }

    #[test]
    fn logdet_does_not_overflow() {
        let a = SpdMatrix::from_diagonal(&[1e200; 8]).unwrap();
        assert_relative_eq!(cholesky_logdet(&a).unwrap(), 8.0 * 1e200f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SpdMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        assert!(matches!(cholesky_logdet(&a), Err(Error::CholeskyFailure(_))));
        let singular = SpdMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        assert!(spd_inverse(&singular).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(spd_inverse(&SpdMatrix::identity(3)).unwrap(), SpdMatrix::identity(3));
        let inv = spd_inverse(&SpdMatrix::from_diagonal(&[2.0, 4.0]).unwrap()).unwrap();
        assert!((inv.matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]))).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..7 {
            let a = random_spd(&mut rng, n);
            let inv = spd_inverse(&a).unwrap();
            let resid = a.matrix() * inv.matrix() - DMatrix::identity(n, n);
            assert!(resid.norm() <= 1e-8 * n as f64);
        }
    }

    #[test]
    fn observation_set_validation() {
        assert!(ObservationSet::new(DMatrix::zeros(3, 1)).is_err());
        assert!(ObservationSet::new(DMatrix::zeros(0, 4)).is_err());
        let mut bad = DMatrix::zeros(2, 3);
        bad[(1, 1)] = f64::NAN;
        assert!(matches!(ObservationSet::new(bad), Err(Error::NonFinite(_))));
        assert!(ObservationSet::from_observations(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn spd_matrix_rejects_asymmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SpdMatrix::new(a).is_err());
        assert!(SpdMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }
}
