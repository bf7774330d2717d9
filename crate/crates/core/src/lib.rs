//! Distribution-free CUSUM monitoring of low-rank matrix (image) streams.
//!
//! Each incoming frame `X_t` is reduced to a `2r`-dimensional feature vector:
//! `r` bilinear projections onto the leading singular directions of the
//! in-control mean `M0`, and the `r` leading singular values of the residual
//! `X_t - M0`. A Hotelling-type quadratic form of that vector feeds a one-sided
//! CUSUM whose control limit is solved analytically from a Brownian-motion
//! approximation of the in-control average run length, using a long-run
//! variance estimate so that temporally correlated streams are handled without
//! any distributional assumption.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the Monte Carlo
//! harness and the command-line frontend live in the `dflim` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is the NaN-rejecting form used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod cusum;
pub mod diagnostics;
mod error;
pub mod features;
pub mod linalg;
pub mod math;
pub mod preprocess;
pub mod rng;
pub mod simulate;

pub use calibration::{calibrate, CalibrationParams, CalibrationStage, InControlModel};
pub use cusum::{AlarmEvent, Detector, MonitorConfig, MonitorState, StepRecord};
pub use error::{Error, Result};
pub use features::{FeatureVector, ProjectionBasis};
pub use linalg::DenseMatrix;
