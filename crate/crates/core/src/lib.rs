//! Sparse spatiotemporal data completion on a continuous timeline.
//!
//! The crate is layered bottom-up:
//!
//! - [`numkit`]: dense matrices, a reverse-mode tape, finite differences, Adam.
//! - [`dataio`]: observation sets, grid CSV files, synthetic fields and the
//!   masking / deletion / merging protocols.
//! - [`models`]: DMF, RNN-DMF and the time-gated TIME-DMF, their joint
//!   training loop, and query-generate for arbitrary timestamps.
//! - [`baselines`]: linear matrix completion, spatial KNN, a Gaussian
//!   conditional-mean imputer and per-subarea linear regression.
//! - [`harness`]: metrics, experiment scenarios, result files and the CLI.

pub mod baselines;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod models;
pub mod numkit;

pub use error::{Error, Result};
