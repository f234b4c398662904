//! Runtime scaling of observation-space and kernel-space divergences with the
//! number of observations per set.
//!
//! Every pair uses two fresh observation sets. An observation-space cell
//! times building both covariance matrices plus the divergence. A
//! kernel-space cell times fitting both descriptors plus the divergence. All
//! timing is single-threaded; each cell keeps the fastest of several runs.

use std::fmt::Write as _;
use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::BenchConfig;
use crate::divergence::{jeffreys, stein};
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::pipeline::Space;
use crate::rkhs::{resolve_rho, CenteredSpectrum, RhoPolicy, RkhsCovd};
use crate::rkhs_divergence::{format_f64, jeffreys_h_hat, stein_h_hat};
use crate::spd::{covariance_descriptor, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchDivergence {
    Stein,
    Jeffreys,
}

impl BenchDivergence {
    pub fn name(self, space: Space) -> &'static str {
        match (self, space) {
            (BenchDivergence::Stein, Space::Observation) => "stein",
            (BenchDivergence::Jeffreys, Space::Observation) => "jeffreys",
            (BenchDivergence::Stein, Space::Rkhs) => "stein_hat",
            (BenchDivergence::Jeffreys, Space::Rkhs) => "jeffreys_hat",
        }
    }
}

const SERIES: [(BenchDivergence, Space); 4] = [
    (BenchDivergence::Stein, Space::Observation),
    (BenchDivergence::Jeffreys, Space::Observation),
    (BenchDivergence::Stein, Space::Rkhs),
    (BenchDivergence::Jeffreys, Space::Rkhs),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub m: usize,
    pub r: usize,
    pub divergence: BenchDivergence,
    pub space: Space,
    pub pairs: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSlope {
    pub divergence: BenchDivergence,
    pub space: Space,
    /// Least-squares slope of `log seconds` against `log m`.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub slopes: Vec<BenchSlope>,
}

impl BenchReport {
    pub fn seconds(&self, m: usize, divergence: BenchDivergence, space: Space) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.m == m && r.divergence == divergence && r.space == space)
            .map(|r| r.seconds)
    }

    pub fn exponent(&self, divergence: BenchDivergence, space: Space) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.divergence == divergence && s.space == space)
            .map(|s| s.exponent)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,r,divergence,space,pairs,seconds\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.m,
                row.r,
                row.divergence.name(row.space),
                row.space,
                row.pairs,
                format_f64(row.seconds)
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}  {:<12} {:<12} {:>12} {:>14}",
            "m", "space", "divergence", "seconds", "us/pair"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>6}  {:<12} {:<12} {:>12.6} {:>14.2}",
                row.m,
                row.space.to_string(),
                row.divergence.name(row.space),
                row.seconds,
                1e6 * row.seconds / row.pairs as f64
            );
        }
        out.push('\n');
        for s in &self.slopes {
            let _ = writeln!(
                out,
                "log-log exponent  {:<12} {:<12} {:>8.3}",
                s.space.to_string(),
                s.divergence.name(s.space),
                s.exponent
            );
        }
        out
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn random_sets(rng: &mut ChaCha8Rng, count: usize, n: usize, m: usize) -> Vec<ObservationSet> {
    (0..count)
        .map(|_| {
            let data = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng));
            ObservationSet::new(data).expect("gaussian samples are finite")
        })
        .collect()
}

/// Kernel-space pair fit with a `rho` shared by the two descriptors.
fn fit_pair(kernel: &KernelSpec, x: &ObservationSet, y: &ObservationSet, r: usize) -> Result<(RkhsCovd, RkhsCovd)> {
    let spectra = [
        CenteredSpectrum::compute(kernel, x)?,
        CenteredSpectrum::compute(kernel, y)?,
    ];
    let rho = resolve_rho(&spectra, r, RhoPolicy::Relative(1e-6))?;
    Ok((spectra[0].descriptor(r, rho)?, spectra[1].descriptor(r, rho)?))
}

fn time_series(
    sets: &[ObservationSet],
    divergence: BenchDivergence,
    space: Space,
    kernel: &KernelSpec,
    r: usize,
) -> Result<(f64, f64)> {
    let start = Instant::now();
    let mut sink = 0.0;
    for pair in sets.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        sink += match space {
            Space::Observation => {
                let (a, b) = (covariance_descriptor(x), covariance_descriptor(y));
                match divergence {
                    BenchDivergence::Stein => stein(&a, &b)?,
                    BenchDivergence::Jeffreys => jeffreys(&a, &b)?,
                }
            }
            Space::Rkhs => {
                let (a, b) = fit_pair(kernel, x, y, r)?;
                match divergence {
                    BenchDivergence::Stein => stein_h_hat(&a, &b)?,
                    BenchDivergence::Jeffreys => jeffreys_h_hat(&a, &b)?,
                }
            }
        };
    }
    Ok((start.elapsed().as_secs_f64(), sink))
}

/// Times every series at every `m` and fits the log-log exponents. Data is
/// drawn from a generator seeded by `seed`; an RBF kernel with unit
/// bandwidth per dimension is used for kernel space.
pub fn run_scaling(cfg: &BenchConfig, seed: u64) -> Result<BenchReport> {
    cfg.validate()?;
    let kernel = KernelSpec::Rbf {
        sigma: (cfg.n as f64).sqrt(),
    };
    let mut m_values = cfg.m_values.clone();
    m_values.sort_unstable();
    m_values.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &m in &m_values {
        let sets = random_sets(&mut rng, 2 * cfg.pairs, cfg.n, m);
        for (divergence, space) in SERIES {
            let mut best = f64::INFINITY;
            for _ in 0..cfg.repeats {
                let (t, sink) = time_series(&sets, divergence, space, &kernel, cfg.r)?;
                std::hint::black_box(sink);
                best = best.min(t);
            }
            rows.push(BenchRow {
                m,
                r: cfg.r,
                divergence,
                space,
                pairs: cfg.pairs,
                seconds: best,
            });
        }
    }
    let log_m: Vec<f64> = m_values.iter().map(|&m| (m as f64).ln()).collect();
    let slopes = SERIES
        .iter()
        .map(|&(divergence, space)| {
            let times: Vec<f64> = rows
                .iter()
                .filter(|r| r.divergence == divergence && r.space == space)
                .map(|r| r.seconds)
                .collect();
            if times.windows(2).any(|w| w[1] < w[0]) {
                warn!(
                    "{} ({space}) time is not monotone in m: {times:?}",
                    divergence.name(space)
                );
            }
            let log_t: Vec<f64> = times.iter().map(|t| t.max(1e-12).ln()).collect();
            BenchSlope {
                divergence,
                space,
                exponent: fit_slope(&log_m, &log_t),
            }
        })
        .collect();
    Ok(BenchReport { rows, slopes })
}
