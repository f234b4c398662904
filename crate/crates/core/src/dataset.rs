//! Dataset manifests, observation CSV files and seeded synthetic data.

use std::fs;
use std::path::{Path, PathBuf};

use log::debug;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{kylberg_features, GrayImage};
use crate::rkhs_divergence::format_f64;
use crate::spd::ObservationSet;

/// How a sample file becomes an observation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// The file is an observation CSV.
    #[default]
    ObservationCsv,
    /// The file is an image; features are sampled on a grid of `stride`.
    Kylberg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub samples: Vec<SampleEntry>,
    #[serde(default)]
    pub recipe: Recipe,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Expected observation dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Expected number of observations per sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

fn default_stride() -> usize {
    4
}

impl Manifest {
    pub fn new(samples: Vec<SampleEntry>) -> Self {
        Self {
            samples,
            recipe: Recipe::default(),
            stride: default_stride(),
            seed: None,
            n: None,
            m: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("manifest, line {} column {}", e.line(), e.column()), e))?;
        if m.stride == 0 {
            return Err(Error::Config("manifest stride must be at least 1".into()));
        }
        if let Some(i) = m.samples.iter().position(|s| s.label.is_empty()) {
            return Err(Error::Config(format!("manifest sample {i} has an empty label")));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { context, message } => Error::Parse {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }
}

/// Samples in manifest order with their labels.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<ObservationSet>,
    pub labels: Vec<String>,
    pub paths: Vec<PathBuf>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parses `m` rows of `n` comma-separated values. A first row that is not
/// entirely numeric is taken as a header.
pub fn parse_observation_csv(text: &str, context: &str) -> Result<ObservationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(context, e))?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => debug!("{context}: treating first row as a header"),
            Err(e) => return Err(Error::parse(format!("{context}, line {line}"), e)),
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{context}: no observations")));
    }
    ObservationSet::from_observations(&rows).map_err(|e| Error::InvalidInput(format!("{context}: {e}")))
}

/// One observation per line, 17 significant digits, no header.
pub fn observation_csv(x: &ObservationSet) -> String {
    let mut out = String::new();
    for col in x.matrix().column_iter() {
        let line: Vec<String> = col.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn load_sample(path: &Path, manifest: &Manifest) -> Result<ObservationSet> {
    match manifest.recipe {
        Recipe::ObservationCsv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_observation_csv(&text, &path.display().to_string())
        }
        Recipe::Kylberg => kylberg_features(&GrayImage::open(path)?, manifest.stride),
    }
}

/// Loads every sample of the manifest at `path`, in manifest order.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let paths: Vec<PathBuf> = manifest.samples.iter().map(|s| base.join(&s.path)).collect();
    let samples = paths
        .par_iter()
        .map(|p| load_sample(p, &manifest))
        .collect::<Result<Vec<_>>>()?;
    for (s, p) in samples.iter().zip(&paths) {
        let first = manifest.n.unwrap_or(samples[0].dim());
        if s.dim() != first {
            return Err(Error::DimensionMismatch(format!(
                "{} has observation dimension {}, expected {first}",
                p.display(),
                s.dim()
            )));
        }
        if let Some(m) = manifest.m {
            if s.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "{} has {} observations, expected {m}",
                    p.display(),
                    s.len()
                )));
            }
        }
    }
    Ok(Dataset {
        samples,
        labels: manifest.samples.into_iter().map(|s| s.label).collect(),
        paths,
    })
}

/// Writes each sample as `sample_<i>.csv` under `dir` plus `manifest.json`,
/// and returns the manifest path.
pub fn save_dataset(dir: &Path, samples: &[ObservationSet], labels: &[String]) -> Result<PathBuf> {
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = samples.len().max(1).to_string().len();
    let mut entries = Vec::with_capacity(samples.len());
    for (i, (s, label)) in samples.iter().zip(labels).enumerate() {
        let name = PathBuf::from(format!("sample_{i:0width$}.csv"));
        let path = dir.join(&name);
        fs::write(&path, observation_csv(s)).map_err(|e| Error::io(&path, e))?;
        entries.push(SampleEntry {
            path: name,
            label: label.clone(),
        });
    }
    let manifest = Manifest::new(entries);
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Maps label strings to class ids in sorted label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelIndex {
    names: Vec<String>,
}

impl LabelIndex {
    pub fn from_labels(labels: &[String]) -> Self {
        let mut names = labels.to_vec();
        names.sort();
        names.dedup();
        Self { names }
    }

    pub fn id(&self, label: &str) -> Result<usize> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(label))
            .map_err(|_| Error::InvalidInput(format!("label '{label}' does not occur in the training set")))
    }

    pub fn ids(&self, labels: &[String]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.id(l)).collect()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticMode {
    /// Zero-mean Gaussian classes with different covariances.
    CovarianceShift,
    /// Equal means, covariances and fourth moments; the classes differ only
    /// in higher-order structure.
    HigherOrder,
}

/// `per_class` observation sets per class for classes 0 and 1, class 0
/// first. Identical arguments give bit-identical output.
pub fn synthetic_two_class(
    seed: u64,
    per_class: usize,
    n: usize,
    m: usize,
    mode: SyntheticMode,
) -> Result<(Vec<ObservationSet>, Vec<usize>)> {
    if per_class < 2 {
        return Err(Error::InvalidInput("per_class must be at least 2".into()));
    }
    if n < 1 || m < 2 {
        return Err(Error::InvalidInput("need n >= 1 and m >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let mix = DMatrix::from_fn(n, n, |i, j| {
        let g: f64 = rng.sample(StandardNormal);
        f64::from(u8::from(i == j)) + 0.5 * g / nf.sqrt()
    });
    let mut sets = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for class in 0..2 {
        for _ in 0..per_class {
            let z = match (mode, class) {
                (SyntheticMode::CovarianceShift, 0) => gaussian(&mut rng, n, m),
                (SyntheticMode::CovarianceShift, _) => {
                    let mut z = gaussian(&mut rng, n, m);
                    let last = n - 1;
                    z.row_mut(0).scale_mut(3.0);
                    if last > 0 {
                        z.row_mut(last).scale_mut(1.0 / 3.0);
                    }
                    z
                }
                (SyntheticMode::HigherOrder, 0) => gaussian(&mut rng, n, m),
                (SyntheticMode::HigherOrder, _) => three_point(&mut rng, n, m),
            };
            sets.push(ObservationSet::new(&mix * z)?);
            labels.push(class);
        }
    }
    Ok((sets, labels))
}

/// Train and test sets drawn from one distribution: both share the mixing
/// matrix. Each is ordered class 0 first.
#[allow(clippy::type_complexity)]
pub fn synthetic_train_test(
    seed: u64,
    train_per_class: usize,
    test_per_class: usize,
    n: usize,
    m: usize,
    mode: SyntheticMode,
) -> Result<((Vec<ObservationSet>, Vec<usize>), (Vec<ObservationSet>, Vec<usize>))> {
    let per_class = train_per_class + test_per_class;
    let (sets, labels) = synthetic_two_class(seed, per_class, n, m, mode)?;
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (i, (s, l)) in sets.into_iter().zip(labels).enumerate() {
        let part = if i % per_class < train_per_class {
            &mut train
        } else {
            &mut test
        };
        part.0.push(s);
        part.1.push(l);
    }
    Ok((train, test))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

/// Independent entries equal to `0` with probability 2/3 and `+-sqrt(3)`
/// with probability 1/6 each: unit variance and fourth moment 3, as for a
/// standard normal.
fn three_point(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    let s = 3f64.sqrt();
    DMatrix::from_fn(n, m, |_, _| match rng.random_range(0..6u8) {
        0 => s,
        1 => -s,
        _ => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::covariance_descriptor;

    #[test]
    fn csv_with_and_without_header() {
        let a = parse_observation_csv("x,y\n1,2\n3,4\n5,6\n", "t").unwrap();
        assert_eq!((a.dim(), a.len()), (2, 3));
        assert_eq!(a.matrix()[(1, 2)], 6.0);
        let b = parse_observation_csv("1,2\n3,4\n5,6\n", "t").unwrap();
        assert_eq!(a, b);
        assert!(parse_observation_csv("1,2\n3,x\n", "t").is_err());
        assert!(parse_observation_csv("1,2\n3\n", "t").is_err());
        assert!(parse_observation_csv("a,b\n", "t").is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let x = ObservationSet::new(DMatrix::from_fn(3, 7, |i, j| (i as f64 + 0.1).powi(j as i32 - 3) / 7.0)).unwrap();
        let back = parse_observation_csv(&observation_csv(&x), "t").unwrap();
        assert_eq!(x, back);
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        assert!(Manifest::from_json(r#"{"samples":[],"extra":1}"#).is_err());
        let m = Manifest::from_json(r#"{"samples":[{"path":"a.csv","label":"x"}]}"#).unwrap();
        assert_eq!((m.recipe, m.stride), (Recipe::ObservationCsv, 4));
        assert!(Manifest::from_json(r#"{"samples":[{"path":"a.csv","label":""}]}"#).is_err());
    }

    #[test]
    fn label_index() {
        let idx = LabelIndex::from_labels(&["b".into(), "a".into(), "b".into()]);
        assert_eq!(idx.ids(&["a".into(), "b".into()]).unwrap(), vec![0, 1]);
        assert!(idx.id("c").is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        for mode in [SyntheticMode::CovarianceShift, SyntheticMode::HigherOrder] {
            let a = synthetic_two_class(5, 3, 3, 50, mode).unwrap();
            let b = synthetic_two_class(5, 3, 3, 50, mode).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, vec![0, 0, 0, 1, 1, 1]);
        }
        assert!(synthetic_two_class(0, 1, 3, 10, SyntheticMode::HigherOrder).is_err());
    }

    #[test]
    fn higher_order_classes_share_covariance() {
        let m = 4000;
        let (sets, _) = synthetic_two_class(8, 2, 3, m, SyntheticMode::HigherOrder).unwrap();
        let c0 = covariance_descriptor(&sets[0]);
        let c1 = covariance_descriptor(&sets[2]);
        let scale = c0.matrix().amax();
        // sampling error of a covariance entry is O(1/sqrt(m))
        assert!((c0.matrix() - c1.matrix()).amax() <= 6.0 * scale / (m as f64).sqrt());
    }
}
