//! Classifiers driven by divergences: nearest neighbour and one-vs-rest SVM
//! with a Gaussian divergence kernel, plus grid-search cross-validation.

pub mod cv;
pub mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rkhs_divergence::{cross_divergences, Divergence, DivergenceMatrix};

pub use cv::{cross_validate, stratified_folds, CvGrid, CvPoint, CvReport};
pub use svm::{svm_predict, svm_train, SvmModel, SvmParams};

/// Descriptors with class ids.
#[derive(Debug, Clone)]
pub struct LabeledSet<D> {
    descriptors: Vec<D>,
    labels: Vec<usize>,
}

impl<D> LabeledSet<D> {
    pub fn new(descriptors: Vec<D>, labels: Vec<usize>) -> Result<Self> {
        if descriptors.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} descriptors but {} labels",
                descriptors.len(),
                labels.len()
            )));
        }
        Ok(Self { descriptors, labels })
    }

    pub fn descriptors(&self) -> &[D] {
        &self.descriptors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        distinct(&self.labels).len()
    }
}

pub(crate) fn distinct(labels: &[usize]) -> Vec<usize> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Classifier choice and its hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Nn {},
    Svm {
        beta: f64,
        c: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        clip_spectrum: bool,
    },
}

fn default_tol() -> f64 {
    1e-3
}

impl ClassifierSpec {
    pub fn svm_params(&self) -> Option<SvmParams> {
        match *self {
            ClassifierSpec::Nn {} => None,
            ClassifierSpec::Svm {
                beta,
                c,
                tol,
                clip_spectrum,
            } => Some(SvmParams {
                tol,
                clip_spectrum,
                ..SvmParams::new(beta, c)
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.svm_params() {
            Some(p) => p.validate(),
            None => Ok(()),
        }
    }
}

/// Label of the nearest training descriptor; ties go to the lowest index.
pub fn nn_classify_row(divergences: &[f64], labels: &[usize]) -> Result<usize> {
    if divergences.is_empty() || divergences.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "nearest neighbour needs one divergence per training label ({} vs {})",
            divergences.len(),
            labels.len()
        )));
    }
    let mut best = 0;
    for (i, d) in divergences.iter().enumerate() {
        if *d < divergences[best] {
            best = i;
        }
    }
    Ok(labels[best])
}

pub fn nn_classify<D: Sync, M: Divergence<D>>(train: &LabeledSet<D>, query: &D, measure: &M) -> Result<usize> {
    let row = cross_divergences(std::slice::from_ref(query), train.descriptors(), measure)?;
    nn_classify_row(&row[0], train.labels())
}

/// Trains an SVM on labelled descriptors; the divergence must be symmetric.
pub fn svm_train_descriptors<D: Sync, M: Divergence<D>>(
    train: &LabeledSet<D>,
    measure: &M,
    divergence_name: &str,
    params: &SvmParams,
) -> Result<SvmModel> {
    let divs: DivergenceMatrix = crate::rkhs_divergence::divergence_matrix(train.descriptors(), measure)?;
    svm_train(&divs, train.labels(), divergence_name, params)
}

pub fn svm_predict_descriptor<D: Sync, M: Divergence<D>>(
    model: &SvmModel,
    train: &[D],
    query: &D,
    measure: &M,
) -> Result<usize> {
    let row = cross_divergences(std::slice::from_ref(query), train, measure)?;
    svm_predict(model, &row[0])
}

/// Fraction of positions where `predicted` equals `truth`; 0 for empty input.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::DivergenceKind;
    use crate::spd::SpdMatrix;

    #[test]
    fn nn_ties_go_to_lowest_index() {
        assert_eq!(nn_classify_row(&[2.0, 1.0, 1.0], &[0, 5, 7]).unwrap(), 5);
        assert!(nn_classify_row(&[], &[]).is_err());
    }

    #[test]
    fn nn_on_spd_matrices() {
        let train = LabeledSet::new(
            vec![
                SpdMatrix::from_diagonal(&[1.0, 1.0]).unwrap(),
                SpdMatrix::from_diagonal(&[5.0, 0.2]).unwrap(),
            ],
            vec![3, 8],
        )
        .unwrap();
        let q = SpdMatrix::from_diagonal(&[4.0, 0.3]).unwrap();
        assert_eq!(nn_classify(&train, &q, &DivergenceKind::Stein).unwrap(), 8);
        assert_eq!(
            nn_classify(&train, &train.descriptors()[0], &DivergenceKind::Burg).unwrap(),
            3
        );
        let single = LabeledSet::new(vec![SpdMatrix::identity(2)], vec![4]).unwrap();
        assert_eq!(nn_classify(&single, &q, &DivergenceKind::Jeffreys).unwrap(), 4);
    }

    #[test]
    fn classifier_spec_json() {
        let s: ClassifierSpec = serde_json::from_str(r#"{"type":"svm","beta":0.5,"c":10}"#).unwrap();
        assert_eq!(s.svm_params().unwrap().tol, 1e-3);
        assert!(serde_json::from_str::<ClassifierSpec>(r#"{"type":"nn","k":3}"#).is_err());
    }
}
