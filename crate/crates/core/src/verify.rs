//! Seeded self-check of the kernel-side algebra against explicit feature
//! spaces. Each identity is run once and reported with its worst observed
//! error and tolerance.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divergence::DivergenceKind;
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::oracle::{
    explicit_divergence, explicit_rkhs_covariance, feature_matrix, materialize_descriptor, ExplicitMapKernel,
};
use crate::rkhs::{fit_batch, fit_rkhs_covd, RhoPolicy, RkhsCovd};
use crate::rkhs_divergence::{burg_h, euclidean_sq_h, jeffreys_h, jeffreys_h_hat, stein_h, stein_h_hat, trace_cross_h};
use crate::spd::{cholesky_logdet, spd_inverse, ObservationSet};

pub const CHECK_NAMES: [&str; 7] = [
    "eigen_gram_identity",
    "determinant_lemma",
    "woodbury_inverse",
    "trace_identity",
    "oracle_equivalence",
    "jeffreys_limit",
    "stein_practical_form",
];

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub trials: usize,
    /// Negative control: perturb every fitted `W` before the identity check.
    pub corrupt_w: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub cases: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<22} observed {:.3e}  tolerance {:.1e}  cases {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.observed,
                c.tolerance,
                c.cases
            )?;
            if let Some(e) = &c.error {
                writeln!(f, "     first error: {e}")?;
            }
        }
        Ok(())
    }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ObservationSet {
    let scale: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let data = DMatrix::from_fn(n, m, |i, _| scale[i] * rng.random_range(-1.0..1.0));
    ObservationSet::new(data).expect("finite samples")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn corrupt(d: &RkhsCovd) -> RkhsCovd {
    let mut w = d.w().clone();
    w.column_mut(0).scale_mut(1.01);
    RkhsCovd::from_parts(*d.kernel(), d.observations().clone(), w, d.lambdas().clone(), d.rho())
        .expect("only W changed")
}

/// Explicit-map configurations: kernel, input dimension, samples, rank.
fn explicit_cases() -> [(KernelSpec, usize, usize, usize); 3] {
    [
        (KernelSpec::Linear, 3, 20, 3),
        (KernelSpec::Polynomial { degree: 2, offset: 0.0 }, 2, 30, 3),
        (KernelSpec::Polynomial { degree: 2, offset: 1.0 }, 2, 30, 5),
    ]
}

/// A pair fitted with `rho` a fixed fraction of the smaller trailing eigenvalue.
fn explicit_pair(
    rng: &mut ChaCha8Rng,
    spec: KernelSpec,
    n: usize,
    m: usize,
    r: usize,
) -> Result<(ObservationSet, ObservationSet, RkhsCovd, RkhsCovd)> {
    let (x, y) = (random_set(rng, n, m), random_set(rng, n, m));
    let lx = fit_rkhs_covd(&spec, &x, r, 0.0)?.lambdas().min();
    let ly = fit_rkhs_covd(&spec, &y, r, 0.0)?.lambdas().min();
    let rho = 1e-2 * lx.min(ly);
    let a = fit_rkhs_covd(&spec, &x, r, rho)?;
    let b = fit_rkhs_covd(&spec, &y, r, rho)?;
    Ok((x, y, a, b))
}

/// Worst error over the cases of one identity. An error while evaluating a
/// case fails the identity.
#[derive(Default)]
struct Worst {
    value: f64,
    cases: usize,
    error: Option<String>,
}

impl Worst {
    fn record(&mut self, r: Result<f64>) {
        match r {
            Ok(v) => {
                self.value = self.value.max(if v.is_nan() { f64::INFINITY } else { v });
                self.cases += 1;
            }
            Err(e) => {
                self.value = f64::INFINITY;
                self.error.get_or_insert(e.to_string());
            }
        }
    }

    fn finish(self, name: &'static str, tolerance: f64) -> CheckResult {
        CheckResult {
            name,
            observed: self.value,
            tolerance,
            passed: self.error.is_none() && self.value <= tolerance,
            cases: self.cases,
            error: self.error,
        }
    }
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let trials = opts.trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::with_capacity(CHECK_NAMES.len());
    let maybe_corrupt = |d: RkhsCovd| if opts.corrupt_w { corrupt(&d) } else { d };

    // W^T K W = Lambda - rho I
    let kernels = [
        KernelSpec::Linear,
        KernelSpec::Polynomial { degree: 2, offset: 1.0 },
        KernelSpec::Polynomial { degree: 3, offset: 0.5 },
        KernelSpec::Rbf { sigma: 0.7 },
        KernelSpec::Rbf { sigma: 2.0 },
    ];
    let mut identity = Worst::default();
    for t in 0..trials.max(10) {
        let spec = kernels[t % kernels.len()];
        let m = rng.random_range(10..40);
        let x = random_set(&mut rng, 3, m);
        let r = rng.random_range(1..=6);
        let frac = rng.random_range(0.0..0.5);
        identity.record((|| {
            let d = fit_rkhs_covd(&spec, &x, r, 0.0)?;
            let d = fit_rkhs_covd(&spec, &x, r, frac * d.lambdas().min())?;
            Ok(maybe_corrupt(d).identity_residual())
        })());
    }
    checks.push(identity.finish("eigen_gram_identity", 1e-8));

    let mut det = Worst::default();
    let mut wood = Worst::default();
    let mut trace = Worst::default();
    let mut oracle = Worst::default();
    for (spec, n, m, r) in explicit_cases() {
        let k = ExplicitMapKernel::new(spec, n)?;
        let dim = k.feature_dim() as f64;
        for _ in 0..trials.div_ceil(3) {
            let (x, y, a, b) = explicit_pair(&mut rng, spec, n, m, r)?;
            let (a, b) = (maybe_corrupt(a), maybe_corrupt(b));
            let rho = a.rho();

            // logdet(C) = |H| log rho + sum log(lambda / rho)
            det.record((|| {
                let lhs = cholesky_logdet(&materialize_descriptor(&k, &a)?)?;
                let rhs = dim * rho.ln() + a.lambdas().iter().map(|l| (l / rho).ln()).sum::<f64>();
                Ok((lhs - rhs).abs() / rhs.abs().max(1.0))
            })());

            // C^{-1} = (I - Phi W Lambda^{-1} W^T Phi^T) / rho
            wood.record((|| {
                let pw = feature_matrix(&k, b.observations())? * b.w();
                let linv = DMatrix::from_diagonal(&b.lambdas().map(|l| 1.0 / l));
                let h = pw.nrows();
                let woodbury = (DMatrix::identity(h, h) - &pw * linv * pw.transpose()) / rho;
                let direct = spd_inverse(&materialize_descriptor(&k, &b)?)?;
                Ok((direct.matrix() - woodbury).amax() * rho)
            })());

            // Tr(C_X C_Y^{-1})
            trace.record((|| {
                let ca = materialize_descriptor(&k, &a)?;
                let cb_inv = spd_inverse(&materialize_descriptor(&k, &b)?)?;
                let explicit = (ca.matrix() * cb_inv.matrix()).trace();
                Ok(rel(trace_cross_h(&a, &b)? + dim, explicit))
            })());

            // kernel side against descriptors materialized without W
            oracle.record((|| {
                let ex = explicit_rkhs_covariance(&k, &x, r, rho)?;
                let ey = explicit_rkhs_covariance(&k, &y, r, rho)?;
                let pairs = [
                    (euclidean_sq_h(&a, &b)?, DivergenceKind::Frobenius),
                    (burg_h(&a, &b)?, DivergenceKind::Burg),
                    (jeffreys_h(&a, &b)?, DivergenceKind::Jeffreys),
                    (stein_h(&a, &b)?, DivergenceKind::Stein),
                    (stein_h_hat(&a, &b)?, DivergenceKind::Stein),
                ];
                let mut worst = 0.0f64;
                for (got, kind) in pairs {
                    worst = worst.max(rel(got, explicit_divergence(kind, &ex, &ey)?));
                }
                Ok(worst)
            })());
        }
    }
    checks.push(det.finish("determinant_lemma", 1e-8));
    checks.push(wood.finish("woodbury_inverse", 1e-8));
    checks.push(trace.finish("trace_identity", 1e-7));
    checks.push(oracle.finish("oracle_equivalence", 1e-6));

    // 2 rho J -> J-hat; the gap must also fall at least tenfold per step
    let spec = KernelSpec::Rbf { sigma: 1.0 };
    let mut limit = Worst::default();
    for _ in 0..trials {
        let sets = [random_set(&mut rng, 3, 40), random_set(&mut rng, 3, 40)];
        limit.record((|| {
            let mut gaps = Vec::new();
            for f in [1e-2, 1e-4, 1e-6] {
                let (ds, _) = fit_batch(&spec, &sets, 5, RhoPolicy::Relative(f))?;
                let (a, b) = (&ds[0], &ds[1]);
                gaps.push(rel(2.0 * a.rho() * jeffreys_h(a, b)?, jeffreys_h_hat(a, b)?));
            }
            let slow = gaps.windows(2).any(|w| w[1] * 10.0 > w[0]);
            Ok(if slow { f64::INFINITY } else { gaps[gaps.len() - 1] })
        })());
    }
    checks.push(limit.finish("jeffreys_limit", 1e-3));

    let spec = KernelSpec::Rbf { sigma: 0.8 };
    let mut practical = Worst::default();
    for _ in 0..trials {
        let sets = [random_set(&mut rng, 3, 30), random_set(&mut rng, 3, 30)];
        practical.record((|| {
            let (ds, _) = fit_batch(&spec, &sets, 6, RhoPolicy::Relative(1e-3))?;
            let (a, b) = (maybe_corrupt(ds[0].clone()), maybe_corrupt(ds[1].clone()));
            Ok(rel(stein_h_hat(&a, &b)?, stein_h(&a, &b)?))
        })());
    }
    checks.push(practical.finish("stein_practical_form", 1e-9));

    debug_assert_eq!(checks.iter().map(|c| c.name).collect::<Vec<_>>(), CHECK_NAMES);
    Ok(VerifyReport { checks })
}
