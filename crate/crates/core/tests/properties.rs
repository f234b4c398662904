use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rkhs_covd::divergence::{burg, frobenius_sq, jeffreys, stein, DivergenceKind};
use rkhs_covd::kernel::KernelSpec;
use rkhs_covd::rkhs::{fit_batch, RhoPolicy};
use rkhs_covd::rkhs_divergence::{divergence_matrix, jeffreys_h_hat, stein_h, stein_h_hat, RkhsDivergence};
use rkhs_covd::spd::{ObservationSet, SpdMatrix};

/// SPD matrix `G G^T + eps I` from a flat entry vector.
fn spd_from(n: usize, entries: &[f64], eps: f64) -> SpdMatrix {
    let g = DMatrix::from_column_slice(n, n, &entries[..n * n]);
    let a = &g * g.transpose() + DMatrix::identity(n, n) * eps;
    SpdMatrix::new((&a + a.transpose()) * 0.5).unwrap()
}

fn spd_pair() -> impl Strategy<Value = (SpdMatrix, SpdMatrix)> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n * n),
            prop::collection::vec(-2.0f64..2.0, n * n),
            0.05f64..1.0,
        )
            .prop_map(move |(a, b, eps)| (spd_from(n, &a, eps), spd_from(n, &b, eps)))
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergences_are_nonnegative_and_vanish_on_the_diagonal((a, b) in spd_pair()) {
        for kind in [DivergenceKind::Frobenius, DivergenceKind::Burg, DivergenceKind::Jeffreys, DivergenceKind::Stein] {
            prop_assert!(kind.evaluate(&a, &b).unwrap() >= 0.0);
            prop_assert!(kind.evaluate(&a, &a).unwrap() <= 1e-10 * a.matrix().trace().max(1.0));
        }
    }

    #[test]
    fn jeffreys_and_stein_are_symmetric((a, b) in spd_pair()) {
        prop_assert!(rel(jeffreys(&a, &b).unwrap(), jeffreys(&b, &a).unwrap()) < 1e-9);
        prop_assert!(rel(stein(&a, &b).unwrap(), stein(&b, &a).unwrap()) < 1e-9);
    }

    #[test]
    fn jeffreys_is_the_symmetrized_burg((a, b) in spd_pair()) {
        let j = jeffreys(&a, &b).unwrap();
        let half = 0.5 * (burg(&a, &b).unwrap() + burg(&b, &a).unwrap());
        prop_assert!((j - half).abs() <= 1e-8 * j.abs().max(1.0));
    }

    #[test]
    fn congruence_invariance((a, b) in spd_pair(), seed in prop::collection::vec(-1.0f64..1.0, 36)) {
        let n = a.dim();
        let t = DMatrix::from_column_slice(n, n, &seed[..n * n]) * 0.3 + DMatrix::identity(n, n);
        prop_assume!(t.clone().determinant().abs() > 0.1);
        let (ta, tb) = (a.congruence(&t).unwrap(), b.congruence(&t).unwrap());
        for kind in [DivergenceKind::Burg, DivergenceKind::Jeffreys, DivergenceKind::Stein] {
            let before = kind.evaluate(&a, &b).unwrap();
            let after = kind.evaluate(&ta, &tb).unwrap();
            prop_assert!((before - after).abs() <= 1e-6 * before.max(1e-3), "{kind}: {before} vs {after}");
        }
    }

    #[test]
    fn frobenius_of_scaled_pair(s in 0.1f64..10.0, (a, b) in spd_pair()) {
        let scale = DMatrix::identity(a.dim(), a.dim()) * s.sqrt();
        let scaled = frobenius_sq(&a.congruence(&scale).unwrap(), &b.congruence(&scale).unwrap()).unwrap();
        prop_assert!(rel(scaled, s * s * frobenius_sq(&a, &b).unwrap()) < 1e-9);
    }

    #[test]
    fn kernel_space_forms(
        x in prop::collection::vec(-1.0f64..1.0, 3 * 20),
        y in prop::collection::vec(-1.0f64..1.0, 3 * 20),
        sigma in 0.5f64..3.0,
        r in 1usize..6,
    ) {
        let sets = [
            ObservationSet::new(DMatrix::from_vec(3, 20, x)).unwrap(),
            ObservationSet::new(DMatrix::from_vec(3, 20, y)).unwrap(),
        ];
        let (ds, _) = fit_batch(&KernelSpec::Rbf { sigma }, &sets, r, RhoPolicy::Relative(1e-3)).unwrap();
        prop_assume!(ds[0].rank() == ds[1].rank());
        let (a, b) = (&ds[0], &ds[1]);
        let hat = stein_h_hat(a, b).unwrap();
        prop_assert!(hat >= 0.0);
        prop_assert!(rel(hat, stein_h(a, b).unwrap()) < 1e-9);
        prop_assert!(rel(hat, stein_h_hat(b, a).unwrap()) < 1e-9);
        let j = jeffreys_h_hat(a, b).unwrap();
        prop_assert!(j >= 0.0 && rel(j, jeffreys_h_hat(b, a).unwrap()) < 1e-9);
    }
}

#[test]
fn divergence_matrix_is_schedule_independent() {
    let sets: Vec<ObservationSet> = (0..12)
        .map(|k| {
            ObservationSet::new(DMatrix::from_fn(3, 25, |i, j| {
                ((k * 31 + i * 7 + j * 13) % 17) as f64 / 17.0 + 0.01 * k as f64
            }))
            .unwrap()
        })
        .collect();
    let (ds, _) = fit_batch(&KernelSpec::Rbf { sigma: 0.5 }, &sets, 4, RhoPolicy::Relative(1e-4)).unwrap();
    let measure = RkhsDivergence::SteinHat;
    let first = divergence_matrix(&ds, &measure).unwrap();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let again = pool.install(|| divergence_matrix(&ds, &measure).unwrap());
        assert_eq!(first, again);
    }
    assert!(first.is_symmetric(0.0));
    let diag: DVector<f64> = DVector::from_fn(first.len(), |i, _| first.get(i, i));
    assert!(diag.iter().all(|v| *v == 0.0));
}
