//! Descriptor fitting and divergence tables for either space, so callers can
//! switch between observation-space and kernel-space descriptors with one
//! setting.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rkhs::{fit_batch, RhoPolicy, RkhsCovd};
use crate::rkhs_divergence::{cross_divergences, divergence_matrix, DivergenceMatrix, RkhsDivergence};
use crate::spd::{covariance_descriptor, ObservationSet, SpdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Observation,
    #[default]
    Rkhs,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Observation => "observation",
            Space::Rkhs => "rkhs",
        })
    }
}

/// Everything needed to turn observation sets into descriptors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorSpec {
    pub space: Space,
    pub kernel: KernelSpec,
    pub r: usize,
    pub rho: RhoPolicy,
}

impl DescriptorSpec {
    pub fn fit(&self, sets: &[ObservationSet]) -> Result<DescriptorSet> {
        check_uniform_dim(sets)?;
        match self.space {
            Space::Observation => Ok(DescriptorSet::Observation(
                sets.par_iter().map(covariance_descriptor).collect(),
            )),
            Space::Rkhs => {
                if sets.is_empty() {
                    let rho = match self.rho {
                        RhoPolicy::Fixed(v) => v,
                        RhoPolicy::Relative(_) => 0.0,
                    };
                    return Ok(DescriptorSet::Rkhs {
                        descriptors: Vec::new(),
                        rho,
                    });
                }
                let (descriptors, rho) = fit_batch(&self.kernel, sets, self.r, self.rho)?;
                Ok(DescriptorSet::Rkhs { descriptors, rho })
            }
        }
    }

    /// The same spec with `rho` pinned to the value a fitted set used, so
    /// that new descriptors are comparable with it.
    pub fn pinned_to(&self, fitted: &DescriptorSet) -> DescriptorSpec {
        match fitted.rho() {
            Some(rho) => DescriptorSpec {
                rho: RhoPolicy::Fixed(rho),
                ..*self
            },
            None => *self,
        }
    }
}

fn check_uniform_dim(sets: &[ObservationSet]) -> Result<()> {
    if let Some(first) = sets.first() {
        if let Some((i, s)) = sets.iter().enumerate().find(|(_, s)| s.dim() != first.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "sample {i} has dimension {}, sample 0 has {}",
                s.dim(),
                first.dim()
            )));
        }
    }
    Ok(())
}

/// Which divergence, and whether kernel-space Jeffreys and Stein use their
/// practical forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureSpec {
    pub kind: DivergenceKind,
    pub practical: bool,
}

impl MeasureSpec {
    pub fn rkhs(&self) -> RkhsDivergence {
        RkhsDivergence::from_kind(self.kind, self.practical)
    }

    pub fn name(&self, space: Space) -> String {
        match space {
            Space::Observation => self.kind.name().to_string(),
            Space::Rkhs => self.rkhs().name().to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DescriptorSet {
    Observation(Vec<SpdMatrix>),
    Rkhs { descriptors: Vec<RkhsCovd>, rho: f64 },
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        match self {
            DescriptorSet::Observation(v) => v.len(),
            DescriptorSet::Rkhs { descriptors, .. } => descriptors.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn space(&self) -> Space {
        match self {
            DescriptorSet::Observation(_) => Space::Observation,
            DescriptorSet::Rkhs { .. } => Space::Rkhs,
        }
    }

    /// The common `rho` of kernel-space descriptors.
    pub fn rho(&self) -> Option<f64> {
        match self {
            DescriptorSet::Observation(_) => None,
            DescriptorSet::Rkhs { rho, .. } => Some(*rho),
        }
    }

    pub fn pairwise(&self, measure: MeasureSpec) -> Result<DivergenceMatrix> {
        match self {
            DescriptorSet::Observation(v) => divergence_matrix(v, &measure.kind),
            DescriptorSet::Rkhs { descriptors, .. } => divergence_matrix(descriptors, &measure.rkhs()),
        }
    }

    /// `out[q][t] = d(queries[q], self[t])`.
    pub fn cross(&self, queries: &DescriptorSet, measure: MeasureSpec) -> Result<Vec<Vec<f64>>> {
        match (queries, self) {
            (DescriptorSet::Observation(q), DescriptorSet::Observation(t)) => cross_divergences(q, t, &measure.kind),
            (DescriptorSet::Rkhs { descriptors: q, .. }, DescriptorSet::Rkhs { descriptors: t, .. }) => {
                cross_divergences(q, t, &measure.rkhs())
            }
            _ => Err(Error::InvalidInput(
                "query and training descriptors live in different spaces".into(),
            )),
        }
    }
}
