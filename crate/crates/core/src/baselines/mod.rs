//! Comparison methods: linear matrix completion (MC), spatial nearest
//! neighbours (KNN-S), a Gaussian conditional-mean imputer (GP) and
//! per-subarea linear regression over time (LINEAR).

mod gp;
mod knn;
mod linear;
mod mc;

use serde::{Deserialize, Serialize};

use crate::numkit::DenseMatrix;

pub use gp::{conditional_mean, gp_complete, GpConfig};
pub use knn::{knn_s_complete, SpatialIndex};
pub use linear::{linear_fit, linear_predict, linear_predict_many, LinearPrediction};
pub use mc::{mc_complete, McConfig, McOptimizer};

/// Output of a baseline completion.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// Ŷ, N × M, in the units of the input.
    pub estimate: DenseMatrix,
    pub report: BaselineReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    /// Optimizer steps; zero for closed-form methods.
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub wall_ms: f64,
    /// Fallbacks taken, in human-readable form.
    pub flags: Vec<String>,
}
