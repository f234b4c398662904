//! `rkhs-covd`: descriptor distance tables, classification, identity checks
//! and the scaling benchmark.
//!
//! Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure, 5 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use rkhs_covd::app::{cmd_bench, cmd_classify, cmd_dist, cmd_verify};
use rkhs_covd::config::{Overrides, RunConfig};
use rkhs_covd::dataset::{save_dataset, synthetic_train_test, SyntheticMode};
use rkhs_covd::{Error, ErrorCategory};

#[derive(Parser)]
#[command(
    name = "rkhs-covd",
    version,
    about = "Covariance descriptors in observation space and in an RKHS"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config `rho` with a fixed value.
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Overrides the config rank `r`.
    #[arg(long, global = true)]
    r: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise divergence table of a data set.
    Dist {
        /// Sample manifest; defaults to `io.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory; defaults to `io.output_dir`, then `.`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on one manifest and report accuracy on another.
    Classify {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the kernel-side identities against explicit feature maps.
    Verify {
        /// Perturb every fitted W before checking (negative control).
        #[arg(long, hide = true)]
        corrupt_w: bool,
    },
    /// Runtime scaling with the number of observations per set.
    Bench {
        /// Also write `bench.csv` and `bench.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded two-class synthetic train/test pair.
    Synth {
        #[arg(long, value_enum, default_value = "higher-order")]
        mode: Mode,
        /// Training sets per class.
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        /// Test sets per class; defaults to `--per-class`.
        #[arg(long)]
        test_per_class: Option<usize>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        m: usize,
        /// Receives `train/` and `test/`, each with a `manifest.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    CovarianceShift,
    HigherOrder,
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
        ErrorCategory::Verification => 5,
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        rho: common.rho,
        r: common.r,
    })?;
    Ok(cfg)
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, Error> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("no {name} given: pass --{name} or set io.{name}")))
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.io.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Dist { manifest, out } => {
            let manifest = required(manifest, &cfg.io.manifest, "manifest")?;
            let dir = output_dir(out, &cfg);
            let res = cmd_dist(&cfg, &manifest, &dir)?;
            println!(
                "{} x {} table written to {}",
                res.matrix.len(),
                res.matrix.len(),
                res.csv_path.display()
            );
        }
        Command::Classify { train, test, out } => {
            let train = required(train, &cfg.io.train, "train")?;
            let test = required(test, &cfg.io.test, "test")?;
            let dir = output_dir(out, &cfg);
            let res = cmd_classify(&cfg, &train, &test, &dir)?;
            if let Some(cv) = &res.cv {
                println!(
                    "cross-validation picked {:?} (mean accuracy {:.4})",
                    cv.best, cv.best_score
                );
            }
            print!("{}", res.summary());
        }
        Command::Verify { corrupt_w } => {
            let report = cmd_verify(&cfg, corrupt_w)?;
            print!("{report}");
            if !report.passed() {
                return Ok(ExitCode::from(exit_code(ErrorCategory::Verification)));
            }
        }
        Command::Bench { out } => {
            let report = cmd_bench(&cfg, out.as_deref())?;
            print!("{}", report.to_table());
        }
        Command::Synth {
            mode,
            per_class,
            test_per_class,
            n,
            m,
            out,
        } => synth(&cfg, mode, (per_class, test_per_class.unwrap_or(per_class)), n, m, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Train and test sets come from one seeded distribution.
fn synth(cfg: &RunConfig, mode: Mode, per_class: (usize, usize), n: usize, m: usize, out: &Path) -> Result<(), Error> {
    let mode = match mode {
        Mode::CovarianceShift => SyntheticMode::CovarianceShift,
        Mode::HigherOrder => SyntheticMode::HigherOrder,
    };
    let (train, test) = synthetic_train_test(cfg.seed, per_class.0, per_class.1, n, m, mode)?;
    for (name, (sets, labels)) in [("train", train), ("test", test)] {
        let labels: Vec<String> = labels.iter().map(|l| format!("class{l}")).collect();
        let path = save_dataset(&out.join(name), &sets, &labels)?;
        info!("wrote {}", path.display());
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
