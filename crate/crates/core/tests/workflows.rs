use std::fs;

use image::{GrayImage as PngImage, Luma};
use rkhs_covd::app::{cmd_classify, cmd_dist};
use rkhs_covd::classify::ClassifierSpec;
use rkhs_covd::config::RunConfig;
use rkhs_covd::dataset::{load_dataset, save_dataset, synthetic_train_test, SyntheticMode};
use rkhs_covd::divergence::DivergenceKind;
use rkhs_covd::kernel::KernelSpec;
use rkhs_covd::pipeline::Space;
use rkhs_covd::rkhs::RhoPolicy;
use rkhs_covd::rkhs_divergence::DivergenceMatrix;

fn labels(y: &[usize]) -> Vec<String> {
    y.iter().map(|l| format!("class{l}")).collect()
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let ((sets, y), _) = synthetic_train_test(3, 3, 0, 4, 17, SyntheticMode::CovarianceShift).unwrap();
    let manifest = save_dataset(tmp.path(), &sets, &labels(&y)).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert_eq!(back.labels, labels(&y));
    for (a, b) in sets.iter().zip(&back.samples) {
        assert_eq!(a.matrix(), b.matrix());
    }
}

#[test]
fn nn_separates_covariance_shift_in_both_spaces() {
    let tmp = tempfile::tempdir().unwrap();
    let ((train, ty), (test, sy)) = synthetic_train_test(21, 15, 15, 4, 60, SyntheticMode::CovarianceShift).unwrap();
    let train_path = save_dataset(&tmp.path().join("train"), &train, &labels(&ty)).unwrap();
    let test_path = save_dataset(&tmp.path().join("test"), &test, &labels(&sy)).unwrap();
    for space in [Space::Observation, Space::Rkhs] {
        for divergence in [DivergenceKind::Stein, DivergenceKind::Jeffreys, DivergenceKind::Burg] {
            let cfg = RunConfig {
                space,
                divergence,
                kernel: KernelSpec::Rbf { sigma: 3.0 },
                r: 8,
                rho: RhoPolicy::Relative(1e-3),
                ..Default::default()
            };
            let out = cmd_classify(&cfg, &train_path, &test_path, &tmp.path().join("out")).unwrap();
            assert!(out.overall >= 0.95, "{space} {divergence}: {}", out.overall);
        }
    }
}

#[test]
fn svm_on_covariance_shift() {
    let tmp = tempfile::tempdir().unwrap();
    let ((train, ty), (test, sy)) = synthetic_train_test(22, 12, 12, 3, 50, SyntheticMode::CovarianceShift).unwrap();
    let train_path = save_dataset(&tmp.path().join("train"), &train, &labels(&ty)).unwrap();
    let test_path = save_dataset(&tmp.path().join("test"), &test, &labels(&sy)).unwrap();
    let cfg = RunConfig {
        space: Space::Observation,
        classifier: ClassifierSpec::Svm {
            beta: 0.5,
            c: 10.0,
            tol: 1e-3,
            clip_spectrum: false,
        },
        ..Default::default()
    };
    let out = cmd_classify(&cfg, &train_path, &test_path, &tmp.path().join("out")).unwrap();
    assert!(out.overall >= 0.9, "{}", out.overall);
    assert!(out.model.unwrap().converged());
}

#[test]
fn dist_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let ((sets, _), _) = synthetic_train_test(4, 2, 0, 3, 30, SyntheticMode::CovarianceShift).unwrap();
    let cfg = RunConfig {
        r: 4,
        ..Default::default()
    };

    let one = save_dataset(&tmp.path().join("one"), &sets[..1], &["a".into()]).unwrap();
    let out = cmd_dist(&cfg, &one, &tmp.path().join("o1")).unwrap();
    assert_eq!(out.matrix.len(), 1);
    assert_eq!(out.matrix.get(0, 0), 0.0);

    let dup = save_dataset(
        &tmp.path().join("dup"),
        &[sets[0].clone(), sets[0].clone()],
        &["a".into(), "a".into()],
    )
    .unwrap();
    let out = cmd_dist(&cfg, &dup, &tmp.path().join("o2")).unwrap();
    assert!(out.matrix.get(0, 1).abs() < 1e-8, "{}", out.matrix.get(0, 1));

    let text = fs::read_to_string(out.csv_path).unwrap();
    let back = DivergenceMatrix::from_csv(&text).unwrap();
    assert!(back.is_symmetric(0.0));
}

#[test]
fn empty_test_manifest_gives_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let ((sets, y), _) = synthetic_train_test(5, 3, 0, 3, 30, SyntheticMode::CovarianceShift).unwrap();
    let train = save_dataset(&tmp.path().join("train"), &sets, &labels(&y)).unwrap();
    let test = save_dataset(&tmp.path().join("test"), &[], &[]).unwrap();
    let out = cmd_classify(
        &RunConfig {
            r: 4,
            ..Default::default()
        },
        &train,
        &test,
        &tmp.path().join("out"),
    )
    .unwrap();
    assert!(out.predictions.is_empty());
    assert_eq!(out.overall, 0.0);
    let csv = fs::read_to_string(tmp.path().join("out/predictions.csv")).unwrap();
    assert_eq!(csv, "path,truth,predicted\n");
}

#[test]
fn image_manifest_uses_grid_features() {
    let tmp = tempfile::tempdir().unwrap();
    for (k, name) in ["a.png", "b.png"].iter().enumerate() {
        let img = PngImage::from_fn(32, 24, |u, v| {
            let h = (u.wrapping_mul(73_856_093) ^ v.wrapping_mul(19_349_663) ^ (k as u32 + 1).wrapping_mul(83_492_791))
                .wrapping_mul(2_654_435_761);
            Luma([(h >> 24) as u8])
        });
        img.save(tmp.path().join(name)).unwrap();
    }
    let manifest = r#"{"recipe": "kylberg", "stride": 4, "n": 5,
        "samples": [{"path": "a.png", "label": "x"}, {"path": "b.png", "label": "y"}]}"#;
    fs::write(tmp.path().join("manifest.json"), manifest).unwrap();
    let data = load_dataset(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(data.samples[0].dim(), 5);
    // columns 2, 6, ..., 30 and rows 2, 6, ..., 22
    assert_eq!(data.samples[0].len(), 8 * 6);
    let cfg = RunConfig {
        space: Space::Observation,
        ..Default::default()
    };
    let out = cmd_dist(&cfg, &tmp.path().join("manifest.json"), &tmp.path().join("out")).unwrap();
    assert!(out.matrix.get(0, 1) > 0.0);
}
