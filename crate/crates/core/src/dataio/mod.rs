//! Problem instances on a continuous timeline and the protocols that build them.
//!
//! An [`ObservationSet`] is the sparse instance: one column per submission time,
//! a binary mask of which subareas were sensed, and the strictly increasing
//! timestamps. Unobserved cells hold the sentinel `0.0` and are only ever read
//! through the mask.

mod discretize;
mod grid_csv;
mod normalize;
mod sampling;
mod submissions;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

pub use discretize::{discretize_merge, DiscreteObservation};
pub use grid_csv::{load_grid_csv, write_grid_csv, write_observation_csv, GridData};
pub use normalize::{normalize, AffineTransform};
pub use sampling::{delete_columns, mask_columns, sample_indices, MaskMode, MaskSpec};
pub use submissions::{to_observation_set, Submission};
pub use synthetic::{generate_synthetic, rank1_ground_truth, SyntheticField, SyntheticKind, SyntheticSpec, Wave, DAY_SECONDS};

/// Value stored in mask-zero cells.
pub const SENTINEL: f64 = 0.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub units: String,
    /// Column labels of the subareas, in row order.
    pub area_ids: Vec<String>,
}

impl Meta {
    pub fn named(name: impl Into<String>, n: usize) -> Self {
        Self {
            name: name.into(),
            units: String::new(),
            area_ids: (0..n).map(|i| format!("a{i}")).collect(),
        }
    }
}

/// Planar subarea coordinates, one `[x, y]` per row.
pub type Coords = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    /// Y′, N×M. Mask-zero cells hold [`SENTINEL`].
    pub values: DenseMatrix,
    /// C, N×M with entries in {0, 1}.
    pub mask: DenseMatrix,
    /// T, strictly increasing, length M.
    pub times: Vec<f64>,
    pub coords: Option<Coords>,
    pub meta: Meta,
}

impl ObservationSet {
    pub fn new(values: DenseMatrix, mask: DenseMatrix, times: Vec<f64>, meta: Meta) -> Result<Self> {
        let obs = Self {
            values,
            mask,
            times,
            coords: None,
            meta,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn n_subareas(&self) -> usize {
        self.values.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)] != 0.0
    }

    pub fn observed_count(&self) -> usize {
        self.mask.as_slice().iter().filter(|m| **m != 0.0).count()
    }

    /// Column indices observed in column `j`.
    pub fn observed_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n_subareas()).filter(|&i| self.is_observed(i, j)).collect()
    }

    pub fn mean_gap(&self) -> f64 {
        mean_gap(&self.times)
    }

    /// Checks shapes, strictly increasing times and binary mask. Mask-zero
    /// cells are reset to the sentinel by constructors, not checked here.
    pub fn validate(&self) -> Result<()> {
        self.values.check_same(&self.mask, "observation set")?;
        if self.times.len() != self.values.cols() {
            return Err(Error::Dimension {
                op: "observation times",
                lhs: self.values.shape(),
                rhs: (self.times.len(), 1),
            });
        }
        check_times(&self.times)?;
        if let Some(bad) = self.mask.as_slice().iter().find(|m| **m != 0.0 && **m != 1.0) {
            return Err(Error::Input(format!("mask entry {bad} is not binary")));
        }
        if let Some(c) = &self.coords {
            if c.len() != self.n_subareas() {
                return Err(Error::Input(format!(
                    "{} coordinates for {} subareas",
                    c.len(),
                    self.n_subareas()
                )));
            }
        }
        Ok(())
    }

    /// Continuous-mode instances additionally need ≥1 observation per column.
    pub fn validate_continuous(&self) -> Result<()> {
        self.validate()?;
        for j in 0..self.n_columns() {
            if (0..self.n_subareas()).all(|i| !self.is_observed(i, j)) {
                return Err(Error::Input(format!("column {j} has no observation")));
            }
        }
        Ok(())
    }

    /// Complement of the mask: cells to score.
    pub fn unobserved_mask(&self) -> DenseMatrix {
        self.mask.map(|m| if m != 0.0 { 0.0 } else { 1.0 })
    }
}

/// Fully known field aligned to a set of timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub values: DenseMatrix,
    pub times: Vec<f64>,
    pub coords: Option<Coords>,
    pub meta: Meta,
    /// Continuous description for synthetic fields; evaluates any `t`.
    pub field: Option<SyntheticField>,
}

impl GroundTruth {
    pub fn new(values: DenseMatrix, times: Vec<f64>, meta: Meta) -> Result<Self> {
        if times.len() != values.cols() {
            return Err(Error::Dimension {
                op: "ground truth times",
                lhs: values.shape(),
                rhs: (times.len(), 1),
            });
        }
        check_times(&times)?;
        Ok(Self {
            values,
            times,
            coords: None,
            meta,
            field: None,
        })
    }

    pub fn n_subareas(&self) -> usize {
        self.values.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.cols()
    }

    /// Keeps the listed columns (which must be increasing).
    pub fn select_columns(&self, keep: &[usize]) -> GroundTruth {
        GroundTruth {
            values: self.values.select_columns(keep),
            times: keep.iter().map(|&j| self.times[j]).collect(),
            coords: self.coords.clone(),
            meta: self.meta.clone(),
            field: self.field.clone(),
        }
    }

    /// The fully observed instance (mask all ones).
    pub fn fully_observed(&self) -> ObservationSet {
        ObservationSet {
            values: self.values.clone(),
            mask: DenseMatrix::filled(self.n_subareas(), self.n_columns(), 1.0),
            times: self.times.clone(),
            coords: self.coords.clone(),
            meta: self.meta.clone(),
        }
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    for (j, t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::Input(format!("time at column {j} is not finite")));
        }
        if j > 0 && *t <= times[j - 1] {
            return Err(Error::Input(format!(
                "times not strictly increasing at column {j}: {} after {}",
                t,
                times[j - 1]
            )));
        }
    }
    Ok(())
}

/// Mean inter-arrival gap; 1.0 for fewer than two timestamps.
pub fn mean_gap(times: &[f64]) -> f64 {
    if times.len() < 2 {
        return 1.0;
    }
    (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
}
