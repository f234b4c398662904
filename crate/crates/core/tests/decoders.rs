//! Stable-toolchain companion to the fuzz targets: the checked-in seeds are
//! decoded, then mutated deterministically, and each decoder must either
//! reject the input or satisfy the same invariants the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkhs_covd::classify::svm::{svm_predict, SvmModel};
use rkhs_covd::codec::{decode_rkhs_covd, encode_rkhs_covd};
use rkhs_covd::config::RunConfig;
use rkhs_covd::dataset::{observation_csv, parse_observation_csv, Manifest};
use rkhs_covd::rkhs_divergence::DivergenceMatrix;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn mutations(seed: &[u8], rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = seed.to_vec();
        match rng.random_range(0..4) {
            0 if !v.is_empty() => {
                let i = rng.random_range(0..v.len());
                v[i] ^= 1 << rng.random_range(0..8);
            }
            1 if !v.is_empty() => v.truncate(rng.random_range(0..v.len())),
            2 => {
                let i = rng.random_range(0..=v.len());
                v.insert(i, rng.random());
            }
            _ if !v.is_empty() => {
                let i = rng.random_range(0..v.len());
                v[i] = b"0123456789,.-e\n\"{}:"[rng.random_range(0..19)];
            }
            _ => {}
        }
        out.push(v);
    }
    out
}

fn exercise(target: &str, valid: &[&str], check: impl Fn(&[u8]) -> bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    for (name, bytes) in corpus(target) {
        assert_eq!(check(&bytes), valid.contains(&name.as_str()), "{target}/{name}");
        for m in mutations(&bytes, &mut rng, 400) {
            check(&m);
        }
    }
}

#[test]
fn rkhs_record() {
    exercise(
        "rkhs_record",
        &["linear_2x3_r2", "poly_1x2_r1", "rbf_2x3_r1"],
        |data| match decode_rkhs_covd(data) {
            Ok(d) => {
                assert_eq!(encode_rkhs_covd(&d), data);
                true
            }
            Err(_) => false,
        },
    );
}

#[test]
fn observation_csv_text() {
    exercise("observation_csv", &["header.csv", "plain.csv"], |data| {
        let Ok(text) = std::str::from_utf8(data) else {
            return false;
        };
        match parse_observation_csv(text, "seed") {
            Ok(x) => {
                assert!(x.matrix().iter().all(|v| v.is_finite()));
                let back = parse_observation_csv(&observation_csv(&x), "seed").unwrap();
                assert_eq!(back.matrix(), x.matrix());
                true
            }
            Err(_) => false,
        }
    });
}

#[test]
fn manifest_json() {
    exercise("manifest_json", &["csv.json", "images.json"], |data| {
        let Ok(text) = std::str::from_utf8(data) else {
            return false;
        };
        match Manifest::from_json(text) {
            Ok(m) => {
                let again = serde_json::to_string(&m).unwrap();
                assert_eq!(Manifest::from_json(&again).unwrap(), m);
                true
            }
            Err(_) => false,
        }
    });
}

#[test]
fn run_config() {
    exercise(
        "run_config",
        &["default.json", "observation.json", "svm_cv.json"],
        |data| {
            let Ok(text) = std::str::from_utf8(data) else {
                return false;
            };
            match RunConfig::from_json(text) {
                Ok(cfg) => {
                    cfg.validate().unwrap();
                    assert_eq!(RunConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
                    true
                }
                Err(_) => false,
            }
        },
    );
}

#[test]
fn svm_model() {
    exercise("svm_model", &["two_class.json"], |data| {
        let Ok(model) = serde_json::from_slice::<SvmModel>(data) else {
            return false;
        };
        if model.validate().is_err() {
            return false;
        }
        let _ = svm_predict(&model, &vec![0.5; model.labels.len()]);
        true
    });
}

#[test]
fn divergence_csv() {
    exercise("divergence_csv", &["one.csv", "two.csv"], |data| {
        let Ok(text) = std::str::from_utf8(data) else {
            return false;
        };
        match DivergenceMatrix::from_csv(text) {
            Ok(m) => {
                assert_eq!(DivergenceMatrix::from_csv(&m.to_csv()).unwrap(), m);
                true
            }
            Err(_) => false,
        }
    });
}
