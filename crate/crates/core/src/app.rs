//! Batch commands behind the CLI. Each command is a function of its config
//! and inputs only; every file it writes is byte-identical across reruns
//! except for timings.
//!
//! Files written to the output directory:
//!
//! | command    | files |
//! |------------|-------|
//! | `dist`     | `distances.csv`, `distances.json` |
//! | `classify` | `predictions.csv`, `classify.json`, `model.json` (SVM only) |
//! | `bench`    | `bench.csv`, `bench.json` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::bench::{run_scaling, BenchReport};
use crate::classify::svm::{svm_predict, svm_train, SvmModel};
use crate::classify::{cross_validate, nn_classify_row, ClassifierSpec, CvReport};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, Dataset, LabelIndex};
use crate::divergence::{DivergenceKernelSpec, DivergenceKind, KernelDivergence};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::oracle::feature_dim;
use crate::pipeline::{DescriptorSpec, Space};
use crate::rkhs_divergence::{format_f64, DivergenceMatrix};
use crate::verify::{run_verify, VerifyOptions, VerifyReport};

/// Symmetry tolerance applied to a re-read distance table.
const SYMMETRY_TOL: f64 = 1e-12;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

fn opt_f64(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |x| json!(format_f64(x)))
}

#[derive(Debug, Clone)]
pub struct DistOutput {
    pub matrix: DivergenceMatrix,
    pub rho: Option<f64>,
    pub csv_path: PathBuf,
    pub sidecar_path: PathBuf,
}

/// Pairwise divergence table of every sample in `manifest`.
pub fn cmd_dist(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<DistOutput> {
    cfg.validate()?;
    let data = load_dataset(manifest)?;
    info!("loaded {} samples from {}", data.len(), manifest.display());
    let set = cfg.descriptor_spec().fit(&data.samples)?;
    let measure = cfg.measure();
    let matrix = set.pairwise(measure)?;

    create_dir(out_dir)?;
    let csv_path = out_dir.join("distances.csv");
    write(&csv_path, &matrix.to_csv())?;

    let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let back = DivergenceMatrix::from_csv(&text)?;
    if back != matrix {
        return Err(Error::Verification(format!(
            "{} does not read back exactly",
            csv_path.display()
        )));
    }
    if measure.symmetric_in(cfg.space) && !back.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Verification(format!("{} is not symmetric", csv_path.display())));
    }

    let sidecar_path = out_dir.join("distances.json");
    let sidecar = json!({
        "command": "dist",
        "config": cfg,
        "manifest": manifest,
        "divergence": measure.name(cfg.space),
        "rho": opt_f64(set.rho()),
        "samples": sample_list(&data),
    });
    write(&sidecar_path, &pretty(&sidecar))?;
    Ok(DistOutput {
        matrix,
        rho: set.rho(),
        csv_path,
        sidecar_path,
    })
}

fn sample_list(data: &Dataset) -> Vec<serde_json::Value> {
    data.paths
        .iter()
        .zip(&data.labels)
        .map(|(p, l)| json!({ "path": p, "label": l }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub path: PathBuf,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub correct: usize,
    pub total: usize,
}

impl ClassAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassifyOutput {
    pub predictions: Vec<Prediction>,
    pub per_class: Vec<ClassAccuracy>,
    /// Fraction of correct test predictions; 0 for an empty test set.
    pub overall: f64,
    pub cv: Option<CvReport>,
    pub model: Option<SvmModel>,
    /// Descriptor settings after cross-validation.
    pub descriptor: DescriptorSpec,
    pub classifier: ClassifierSpec,
}

impl ClassifyOutput {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<24} {:>5}/{:<5} {:.4}",
                c.label,
                c.correct,
                c.total,
                c.accuracy()
            );
        }
        let correct: usize = self.per_class.iter().map(|c| c.correct).sum();
        let _ = writeln!(
            out,
            "{:<24} {:>5}/{:<5} {:.4}",
            "overall",
            correct,
            self.predictions.len(),
            self.overall
        );
        out
    }
}

/// Warns when an SVM Stein kernel uses a `beta` outside the positive
/// definite set for the descriptor dimension. Training proceeds either way.
fn warn_stein_beta(spec: &DescriptorSpec, cfg: &RunConfig, clf: &ClassifierSpec, n: usize) {
    let (ClassifierSpec::Svm { beta, .. }, DivergenceKind::Stein) = (clf, cfg.divergence) else {
        return;
    };
    let dim = match (spec.space, spec.kernel) {
        (Space::Observation, _) | (Space::Rkhs, KernelSpec::Linear) => Some(n),
        (Space::Rkhs, KernelSpec::Polynomial { degree, offset }) => Some(feature_dim(n, degree, offset != 0.0)),
        (Space::Rkhs, KernelSpec::Rbf { .. }) => None,
    };
    if let Ok(k) = DivergenceKernelSpec::new(KernelDivergence::Stein, *beta) {
        if let Err(e) = k.check(dim, false) {
            warn!("{e}; the SVM Gram may be indefinite");
        }
    }
}

/// Trains on `train`, predicts every sample of `test`. Class ids follow the
/// sorted training label names.
pub fn cmd_classify(cfg: &RunConfig, train: &Path, test: &Path, out_dir: &Path) -> Result<ClassifyOutput> {
    cfg.validate()?;
    let train_data = load_dataset(train)?;
    let test_data = load_dataset(test)?;
    if train_data.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no samples", train.display())));
    }
    let index = LabelIndex::from_labels(&train_data.labels);
    let train_ids = index.ids(&train_data.labels)?;
    index.ids(&test_data.labels)?;
    if let (Some(a), Some(b)) = (train_data.samples.first(), test_data.samples.first()) {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch(format!(
                "training samples have dimension {}, test samples {}",
                a.dim(),
                b.dim()
            )));
        }
    }
    let measure = cfg.measure();

    let cv = match &cfg.cv {
        Some(cv) => Some(cross_validate(
            &train_data.samples,
            &train_ids,
            &cfg.descriptor_spec(),
            measure,
            &cfg.classifier,
            &cv.grid,
            cv.folds,
            cfg.seed,
        )?),
        None => None,
    };
    let (spec, clf) = match &cv {
        Some(rep) => rep.apply(&cfg.descriptor_spec(), &cfg.classifier),
        None => (cfg.descriptor_spec(), cfg.classifier),
    };
    warn_stein_beta(&spec, cfg, &clf, train_data.samples[0].dim());

    let train_set = spec.fit(&train_data.samples)?;
    let test_set = spec.pinned_to(&train_set).fit(&test_data.samples)?;
    let rows = train_set.cross(&test_set, measure)?;

    let (predicted, model) = match clf.svm_params() {
        None => (
            rows.iter()
                .map(|r| nn_classify_row(r, &train_ids))
                .collect::<Result<Vec<_>>>()?,
            None,
        ),
        Some(params) => {
            let divs = train_set.pairwise(measure)?;
            let mut model = svm_train(&divs, &train_ids, &measure.name(spec.space), &params)?;
            model.training = train_data.paths.iter().map(|p| p.display().to_string()).collect();
            let predicted = rows
                .iter()
                .map(|r| svm_predict(&model, r))
                .collect::<Result<Vec<_>>>()?;
            (predicted, Some(model))
        }
    };

    let predictions: Vec<Prediction> = test_data
        .paths
        .iter()
        .zip(&test_data.labels)
        .zip(&predicted)
        .map(|((p, t), &id)| Prediction {
            path: p.clone(),
            truth: t.clone(),
            predicted: index.name(id).to_string(),
        })
        .collect();
    let mut per_class: Vec<ClassAccuracy> = LabelIndex::from_labels(&test_data.labels)
        .names()
        .iter()
        .map(|l| ClassAccuracy {
            label: l.clone(),
            correct: 0,
            total: 0,
        })
        .collect();
    for p in &predictions {
        let c = per_class
            .iter_mut()
            .find(|c| c.label == p.truth)
            .expect("every test label is listed");
        c.total += 1;
        c.correct += usize::from(p.truth == p.predicted);
    }
    let correct: usize = per_class.iter().map(|c| c.correct).sum();
    let overall = if predictions.is_empty() {
        0.0
    } else {
        correct as f64 / predictions.len() as f64
    };

    create_dir(out_dir)?;
    let mut csv = String::from("path,truth,predicted\n");
    for p in &predictions {
        let _ = writeln!(
            csv,
            "{},{},{}",
            csv_field(&p.path.display().to_string()),
            csv_field(&p.truth),
            csv_field(&p.predicted)
        );
    }
    write(&out_dir.join("predictions.csv"), &csv)?;
    if let Some(m) = &model {
        write(
            &out_dir.join("model.json"),
            &(serde_json::to_string_pretty(m).expect("model serializes") + "\n"),
        )?;
    }
    let sidecar = json!({
        "command": "classify",
        "config": cfg,
        "train": train,
        "test": test,
        "divergence": measure.name(spec.space),
        "rho": opt_f64(train_set.rho()),
        "selected": {
            "kernel": spec.kernel,
            "r": spec.r,
            "classifier": clf,
        },
        "cv": cv.as_ref().map(|c| json!({
            "folds": c.folds,
            "best_score": format_f64(c.best_score),
            "scores": c.scores.iter().map(|s| json!({
                "point": s.point,
                "mean_accuracy": format_f64(s.mean_accuracy),
            })).collect::<Vec<_>>(),
        })),
        "per_class": per_class.iter().map(|c| json!({
            "label": c.label,
            "correct": c.correct,
            "total": c.total,
            "accuracy": format_f64(c.accuracy()),
        })).collect::<Vec<_>>(),
        "overall": format_f64(overall),
        "test_samples": predictions.len(),
    });
    write(&out_dir.join("classify.json"), &pretty(&sidecar))?;

    Ok(ClassifyOutput {
        predictions,
        per_class,
        overall,
        cv,
        model,
        descriptor: spec,
        classifier: clf,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs the identity suite. A failed identity is reported, not returned as an
/// error; callers decide the exit status from [`VerifyReport::passed`].
pub fn cmd_verify(cfg: &RunConfig, corrupt_w: bool) -> Result<VerifyReport> {
    run_verify(&VerifyOptions {
        seed: cfg.seed,
        trials: cfg.verify.trials,
        corrupt_w,
    })
}

/// Runs the scaling benchmark and, given a directory, writes its CSV and a
/// sidecar.
pub fn cmd_bench(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<BenchReport> {
    let report = run_scaling(&cfg.bench, cfg.seed)?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write(&dir.join("bench.csv"), &report.to_csv())?;
        let sidecar = json!({
            "command": "bench",
            "config": cfg,
            "slopes": report.slopes.iter().map(|s| json!({
                "divergence": s.divergence.name(s.space),
                "space": s.space,
                "exponent": format_f64(s.exponent),
            })).collect::<Vec<_>>(),
        });
        write(&dir.join("bench.json"), &pretty(&sidecar))?;
    }
    Ok(report)
}
