//! Exhaustive grid search with stratified k-fold cross-validation.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::svm::{svm_predict, svm_train};
use super::{accuracy, distinct, nn_classify_row, ClassifierSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::pipeline::{DescriptorSpec, MeasureSpec, Space};
use crate::rkhs_divergence::DivergenceMatrix;
use crate::spd::ObservationSet;

/// Candidate values per hyper-parameter. Axes that do not apply to the
/// chosen space, kernel or classifier are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvGrid {
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub r: Vec<usize>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub c: Vec<f64>,
}

/// One grid point; `None` marks an axis that does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub sigma: Option<f64>,
    pub r: Option<usize>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub point: CvPoint,
    pub mean_accuracy: f64,
    /// `None` for skipped folds.
    pub fold_accuracies: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub best: CvPoint,
    pub best_score: f64,
    pub folds: usize,
    pub scores: Vec<CvScore>,
}

impl CvReport {
    /// `base` with the selected hyper-parameters substituted.
    pub fn apply(&self, base: &DescriptorSpec, classifier: &ClassifierSpec) -> (DescriptorSpec, ClassifierSpec) {
        let mut spec = *base;
        if let (Some(s), KernelSpec::Rbf { .. }) = (self.best.sigma, spec.kernel) {
            spec.kernel = KernelSpec::Rbf { sigma: s };
        }
        if let Some(r) = self.best.r {
            spec.r = r;
        }
        let mut clf = *classifier;
        if let ClassifierSpec::Svm { beta, c, .. } = &mut clf {
            if let Some(b) = self.best.beta {
                *beta = b;
            }
            if let Some(v) = self.best.c {
                *c = v;
            }
        }
        (spec, clf)
    }
}

/// Fold id per sample. Each class is shuffled with a generator seeded by
/// `seed` and dealt round-robin, continuing across classes.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in distinct(labels) {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

fn axis<T: Copy + PartialOrd>(values: &[T], relevant: bool, name: &'static str) -> Result<Vec<Option<T>>> {
    if !relevant {
        return Ok(vec![None]);
    }
    if values.is_empty() {
        return Err(Error::EmptyGrid(name));
    }
    let mut v = values.to_vec();
    // stable: equal values keep their listed order
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(v.into_iter().map(Some).collect())
}

/// Grid search over `grid`, scoring each point by mean accuracy over the
/// folds. Ties go to the smaller `r`, then `sigma`, then `beta`, then `C`.
/// Folds whose training part misses a class of their test part are skipped.
///
/// For kernel-space descriptors, a relative `rho` is resolved once over all
/// samples for each `(sigma, r)`; it uses no labels.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    sets: &[ObservationSet],
    labels: &[usize],
    base: &DescriptorSpec,
    measure: MeasureSpec,
    classifier: &ClassifierSpec,
    grid: &CvGrid,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    if sets.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples but {} labels",
            sets.len(),
            labels.len()
        )));
    }
    let rkhs = base.space == Space::Rkhs;
    let rbf = matches!(base.kernel, KernelSpec::Rbf { .. });
    let svm = matches!(classifier, ClassifierSpec::Svm { .. });
    let rs = axis(&grid.r, rkhs, "r")?;
    let sigmas = axis(&grid.sigma, rkhs && rbf, "sigma")?;
    let betas = axis(&grid.beta, svm, "beta")?;
    let cs = axis(&grid.c, svm, "c")?;

    let fold_of = stratified_folds(labels, folds, seed)?;
    let splits: Vec<Option<(Vec<usize>, Vec<usize>)>> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let train_classes = distinct(&train.iter().map(|&i| labels[i]).collect::<Vec<_>>());
            let missing = test.iter().any(|&i| train_classes.binary_search(&labels[i]).is_err());
            if test.is_empty() || missing || (svm && train_classes.len() < 2) {
                warn!("skipping fold {f}: its training part lacks a class it is tested on");
                None
            } else {
                Some((train, test))
            }
        })
        .collect();
    if splits.iter().all(Option::is_none) {
        return Err(Error::InvalidInput("every cross-validation fold was skipped".into()));
    }

    let mut scores = Vec::new();
    let mut best: Option<(f64, CvPoint)> = None;
    for &r in &rs {
        for &sigma in &sigmas {
            let mut spec = *base;
            if let Some(s) = sigma {
                spec.kernel = KernelSpec::Rbf { sigma: s };
            }
            if let Some(r) = r {
                spec.r = r;
            }
            let divs = spec.fit(sets)?.pairwise(measure)?;
            for &beta in &betas {
                for &c in &cs {
                    let point = CvPoint { sigma, r, beta, c };
                    let fold_accuracies = splits
                        .iter()
                        .map(|split| {
                            split
                                .as_ref()
                                .map(|(train, test)| fold_accuracy(&divs, labels, train, test, classifier, beta, c))
                                .transpose()
                        })
                        .collect::<Result<Vec<Option<f64>>>>()?;
                    let used: Vec<f64> = fold_accuracies.iter().flatten().copied().collect();
                    let mean = used.iter().sum::<f64>() / used.len() as f64;
                    if best.is_none_or(|(s, _)| mean > s) {
                        best = Some((mean, point));
                    }
                    scores.push(CvScore {
                        point,
                        mean_accuracy: mean,
                        fold_accuracies,
                    });
                }
            }
        }
    }
    let (best_score, best) = best.expect("grid has at least one point");
    Ok(CvReport {
        best,
        best_score,
        folds,
        scores,
    })
}

fn fold_accuracy(
    divs: &DivergenceMatrix,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    classifier: &ClassifierSpec,
    beta: Option<f64>,
    c: Option<f64>,
) -> Result<f64> {
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let row = |q: usize| -> Vec<f64> { train.iter().map(|&t| divs.get(q, t)).collect() };
    let predicted = match classifier.svm_params() {
        None => test
            .iter()
            .map(|&q| nn_classify_row(&row(q), &train_labels))
            .collect::<Result<Vec<_>>>()?,
        Some(mut params) => {
            params.beta = beta.unwrap_or(params.beta);
            params.c = c.unwrap_or(params.c);
            let model = svm_train(&divs.select(train), &train_labels, "cv", &params)?;
            test.iter()
                .map(|&q| svm_predict(&model, &row(q)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(accuracy(&predicted, &truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::DivergenceKind;
    use crate::rkhs::RhoPolicy;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn two_class(seed: u64, per_class: usize) -> (Vec<ObservationSet>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sets = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            let scale = [1.0, 3.0][class];
            for _ in 0..per_class {
                sets.push(
                    ObservationSet::new(DMatrix::from_fn(2, 40, |i, _| {
                        rng.random_range(-1.0..1.0) * if i == 0 { scale } else { 1.0 }
                    }))
                    .unwrap(),
                );
                labels.push(class);
            }
        }
        (sets, labels)
    }

    fn base() -> DescriptorSpec {
        DescriptorSpec {
            space: Space::Rkhs,
            kernel: KernelSpec::Rbf { sigma: 1.0 },
            r: 4,
            rho: RhoPolicy::Relative(1e-3),
        }
    }

    const STEIN: MeasureSpec = MeasureSpec {
        kind: DivergenceKind::Stein,
        practical: true,
    };

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let a = stratified_folds(&labels, 2, 9).unwrap();
        assert_eq!(a, stratified_folds(&labels, 2, 9).unwrap());
        for f in 0..2 {
            let zeros = (0..10).filter(|&i| a[i] == f && labels[i] == 0).count();
            assert_eq!(zeros, 2);
        }
        assert!(stratified_folds(&labels, 1, 0).is_err());
    }

    #[test]
    fn single_point_grid() {
        let (sets, labels) = two_class(1, 6);
        let grid = CvGrid {
            sigma: vec![1.5],
            r: vec![3],
            ..Default::default()
        };
        let rep = cross_validate(&sets, &labels, &base(), STEIN, &ClassifierSpec::Nn {}, &grid, 3, 5).unwrap();
        assert_eq!(rep.scores.len(), 1);
        assert_eq!(
            rep.best,
            CvPoint {
                sigma: Some(1.5),
                r: Some(3),
                beta: None,
                c: None
            }
        );
        assert!(rep.best_score > 0.8);
    }

    #[test]
    fn ties_prefer_first_in_order() {
        let (sets, labels) = two_class(2, 5);
        let grid = CvGrid {
            sigma: vec![1.0, 1.0],
            r: vec![3],
            ..Default::default()
        };
        let rep = cross_validate(&sets, &labels, &base(), STEIN, &ClassifierSpec::Nn {}, &grid, 2, 5).unwrap();
        assert_eq!(rep.scores[0].mean_accuracy, rep.scores[1].mean_accuracy);
        assert_eq!(rep.best.sigma, Some(1.0));
    }

    #[test]
    fn svm_grid_is_deterministic() {
        let (sets, labels) = two_class(3, 6);
        let grid = CvGrid {
            sigma: vec![0.5, 2.0],
            r: vec![3, 5],
            beta: vec![0.5, 1.0],
            c: vec![1.0, 10.0],
        };
        let clf = ClassifierSpec::Svm {
            beta: 1.0,
            c: 1.0,
            tol: 1e-3,
            clip_spectrum: false,
        };
        let a = cross_validate(&sets, &labels, &base(), STEIN, &clf, &grid, 3, 11).unwrap();
        let b = cross_validate(&sets, &labels, &base(), STEIN, &clf, &grid, 3, 11).unwrap();
        assert_eq!(a.scores.len(), 16);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_relevant_axis_is_an_error() {
        let (sets, labels) = two_class(4, 3);
        let grid = CvGrid {
            r: vec![3],
            ..Default::default()
        };
        let err = cross_validate(&sets, &labels, &base(), STEIN, &ClassifierSpec::Nn {}, &grid, 2, 0).unwrap_err();
        assert!(matches!(err, Error::EmptyGrid("sigma")));
        let obs = DescriptorSpec {
            space: Space::Observation,
            ..base()
        };
        // no axis applies to observation-space nearest neighbour
        let rep = cross_validate(
            &sets,
            &labels,
            &obs,
            STEIN,
            &ClassifierSpec::Nn {},
            &CvGrid::default(),
            2,
            0,
        )
        .unwrap();
        assert_eq!(rep.scores.len(), 1);
    }
}
