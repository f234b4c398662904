use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkhs_covd::divergence::DivergenceKind;
use rkhs_covd::kernel::KernelSpec;
use rkhs_covd::oracle::{explicit_divergence, explicit_jeffreys_limit, explicit_rkhs_covariance, ExplicitMapKernel};
use rkhs_covd::rkhs::fit_rkhs_covd;
use rkhs_covd::rkhs_divergence::{burg_h, euclidean_sq_h, jeffreys_h, jeffreys_h_hat, stein_h, stein_h_hat};
use rkhs_covd::spd::ObservationSet;

fn random_set(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ObservationSet {
    let shift: f64 = rng.random_range(0.5..1.5);
    ObservationSet::new(DMatrix::from_fn(n, m, |i, _| {
        shift * (i as f64 + 1.0) * rng.random_range(-1.0..1.0)
    }))
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn kernel_side_matches_explicit_space() {
    let cases = [
        (KernelSpec::Linear, 3, 20, 3),
        (KernelSpec::Polynomial { degree: 2, offset: 0.0 }, 2, 30, 3),
        (KernelSpec::Polynomial { degree: 2, offset: 1.0 }, 2, 30, 5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (spec, n, m, r) in cases {
        let k = ExplicitMapKernel::new(spec, n).unwrap();
        for _ in 0..10 {
            let (x, y) = (random_set(&mut rng, n, m), random_set(&mut rng, n, m));
            let a0 = fit_rkhs_covd(&spec, &x, r, 0.0).unwrap();
            let lambda_min = a0.lambdas().min();
            let rho = 1e-2 * lambda_min;
            let a = fit_rkhs_covd(&spec, &x, r, rho).unwrap();
            let b = fit_rkhs_covd(&spec, &y, r, rho).unwrap();
            let ca = explicit_rkhs_covariance(&k, &x, r, rho).unwrap();
            let cb = explicit_rkhs_covariance(&k, &y, r, rho).unwrap();

            let pairs = [
                (euclidean_sq_h(&a, &b).unwrap(), DivergenceKind::Frobenius),
                (burg_h(&a, &b).unwrap(), DivergenceKind::Burg),
                (jeffreys_h(&a, &b).unwrap(), DivergenceKind::Jeffreys),
                (stein_h(&a, &b).unwrap(), DivergenceKind::Stein),
                (stein_h_hat(&a, &b).unwrap(), DivergenceKind::Stein),
            ];
            for (got, kind) in pairs {
                let want = explicit_divergence(kind, &ca, &cb).unwrap();
                assert!(rel(got, want) <= 1e-6, "{spec} {kind}: {got} vs {want}");
            }
            let limit = explicit_jeffreys_limit(&k, &x, &y, r).unwrap();
            let hat = jeffreys_h_hat(&a, &b).unwrap();
            let scale = a.lambdas().sum() + b.lambdas().sum();
            assert!(
                (hat - limit).abs() <= 1e-9 * scale,
                "{spec} jeffreys limit: {hat} vs {limit}"
            );
        }
    }
}
