//! Covariance descriptors in observation space and in a reproducing kernel
//! Hilbert space, Bregman divergences between them, and classifiers on top.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod bench;
pub mod classify;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod divergence;
pub mod error;
pub mod features;
pub mod kernel;
pub mod oracle;
pub mod pipeline;
pub mod rkhs;
pub mod rkhs_divergence;
pub mod spd;
pub mod verify;

pub use error::{Error, ErrorCategory, Result};
