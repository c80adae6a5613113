use serde::{Deserialize, Serialize};

use super::{ObservationSet, SENTINEL};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

pub const STD_FLOOR: f64 = 1e-8;

/// z-score record: `normalized = (raw − mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub mean: f64,
    pub std: f64,
    /// Set when the observed values were (near) constant and `std` was floored.
    pub floored: bool,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            floored: false,
        }
    }

    #[inline]
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, normalized: f64) -> f64 {
        normalized * self.std + self.mean
    }

    pub fn invert_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        m.map(|v| self.invert(v))
    }
}

/// z-scores the observed cells using statistics of mask-one cells only.
/// Mask-zero cells are reset to the sentinel.
pub fn normalize(obs: &ObservationSet) -> Result<(ObservationSet, AffineTransform)> {
    let observed: Vec<f64> = obs
        .values
        .as_slice()
        .iter()
        .zip(obs.mask.as_slice())
        .filter(|(_, m)| **m != 0.0)
        .map(|(v, _)| *v)
        .collect();
    if observed.len() < 2 {
        return Err(Error::Input(format!(
            "normalization needs at least 2 observed cells, found {}",
            observed.len()
        )));
    }
    let count = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / count;
    let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let raw_std = var.sqrt();
    let floored = raw_std < STD_FLOOR;
    let tf = AffineTransform {
        mean,
        std: raw_std.max(STD_FLOOR),
        floored,
    };

    let mut values = obs.values.clone();
    for (v, m) in values.as_mut_slice().iter_mut().zip(obs.mask.as_slice()) {
        *v = if *m != 0.0 { tf.apply(*v) } else { SENTINEL };
    }
    let mut out = obs.clone();
    out.values = values;
    Ok((out, tf))
}
