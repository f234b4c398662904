//! Run configuration: one JSON document, unknown keys rejected, validated
//! as a whole at load time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierSpec, CvGrid};
use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::pipeline::{DescriptorSpec, MeasureSpec, Space};
use crate::rkhs::RhoPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub grid: CvGrid,
}

fn default_folds() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_m_values")]
    pub m_values: Vec<usize>,
    #[serde(default = "default_bench_n")]
    pub n: usize,
    #[serde(default = "default_bench_r")]
    pub r: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Each cell keeps the fastest of this many timed runs.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_m_values() -> Vec<usize> {
    vec![50, 100, 200, 400]
}

fn default_bench_n() -> usize {
    10
}

fn default_bench_r() -> usize {
    10
}

fn default_pairs() -> usize {
    200
}

fn default_repeats() -> usize {
    3
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_values: default_m_values(),
            n: default_bench_n(),
            r: default_bench_r(),
            pairs: default_pairs(),
            repeats: default_repeats(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let mut distinct = self.m_values.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::Config("bench needs at least three distinct m values".into()));
        }
        if distinct[0] < 2 {
            return Err(Error::Config("bench m values must be at least 2".into()));
        }
        if self.pairs < 100 {
            return Err(Error::Config(format!(
                "bench needs at least 100 pairs, got {}",
                self.pairs
            )));
        }
        if self.n < 1 || self.r < 1 || self.repeats < 1 {
            return Err(Error::Config("bench n, r and repeats must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random descriptor pairs per identity.
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    20
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub rho: RhoPolicy,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_divergence")]
    pub divergence: DivergenceKind,
    #[serde(default)]
    pub space: Space,
    /// Use the rho-robust Jeffreys and Stein forms in kernel space.
    #[serde(default = "default_true")]
    pub practical: bool,
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvConfig>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub io: IoConfig,
}

fn default_kernel() -> KernelSpec {
    KernelSpec::Rbf { sigma: 1.0 }
}

fn default_r() -> usize {
    10
}

fn default_divergence() -> DivergenceKind {
    DivergenceKind::Stein
}

fn default_true() -> bool {
    true
}

fn default_classifier() -> ClassifierSpec {
    ClassifierSpec::Nn {}
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Command-line overrides of config keys.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Replaces the rho policy with a fixed value.
    pub rho: Option<f64>,
    pub r: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths inside `io` are resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.io.manifest,
            &mut cfg.io.train,
            &mut cfg.io.test,
            &mut cfg.io.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(rho) = o.rho {
            self.rho = RhoPolicy::Fixed(rho);
        }
        if let Some(r) = o.r {
            self.r = r;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.kernel.validate().map_err(cfg_err)?;
        self.rho.validate().map_err(cfg_err)?;
        if self.r < 1 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        self.classifier.validate().map_err(cfg_err)?;
        if let Some(cv) = &self.cv {
            if cv.folds < 2 {
                return Err(Error::Config(format!("cv folds must be at least 2, got {}", cv.folds)));
            }
            let bad_real = |v: &f64| !(*v > 0.0 && v.is_finite());
            if cv.grid.sigma.iter().any(bad_real) || cv.grid.beta.iter().any(bad_real) || cv.grid.c.iter().any(bad_real)
            {
                return Err(Error::Config("cv grid values must be positive".into()));
            }
            if cv.grid.r.contains(&0) {
                return Err(Error::Config("cv grid ranks must be at least 1".into()));
            }
        }
        if matches!(self.classifier, ClassifierSpec::Svm { .. }) && !self.measure().symmetric_in(self.space) {
            return Err(Error::Config(format!(
                "the SVM kernel needs a symmetric divergence; '{}' is not",
                self.divergence
            )));
        }
        self.bench.validate()?;
        if self.verify.trials < 1 {
            return Err(Error::Config("verify trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn descriptor_spec(&self) -> DescriptorSpec {
        DescriptorSpec {
            space: self.space,
            kernel: self.kernel,
            r: self.r,
            rho: self.rho,
        }
    }

    pub fn measure(&self) -> MeasureSpec {
        MeasureSpec {
            kind: self.divergence,
            practical: self.practical,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl MeasureSpec {
    pub fn symmetric_in(&self, space: Space) -> bool {
        match space {
            Space::Observation => self.kind.is_symmetric(),
            Space::Rkhs => self.rkhs().is_symmetric(),
        }
    }
}
