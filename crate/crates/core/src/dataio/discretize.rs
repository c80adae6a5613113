use serde::{Deserialize, Serialize};

use super::{ObservationSet, SENTINEL};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Time-discrete view of an observation set: equal units, submissions merged
/// by averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteObservation {
    pub unit_length: f64,
    /// Start of unit 0 (the first timestamp).
    pub origin: f64,
    pub units: usize,
    /// Y^(D)′, N×P; mask-zero cells hold the sentinel.
    pub values: DenseMatrix,
    /// C^(D), N×P.
    pub mask: DenseMatrix,
    /// Unit index of every raw column.
    pub column_unit: Vec<usize>,
}

impl DiscreteObservation {
    /// Unit index of time `t`, clamped into `0..units`.
    pub fn unit_of(&self, t: f64) -> usize {
        bucket(t, self.origin, self.unit_length, self.units)
    }

    /// Unit midpoints, usable as timestamps of the merged instance.
    pub fn unit_times(&self) -> Vec<f64> {
        (0..self.units)
            .map(|p| self.origin + (p as f64 + 0.5) * self.unit_length)
            .collect()
    }

    /// Spreads an N×P estimate back onto the raw columns: every raw column
    /// takes the estimate of the unit it fell in.
    pub fn expand(&self, estimate: &DenseMatrix) -> DenseMatrix {
        let n = estimate.rows();
        DenseMatrix::from_fn(n, self.column_unit.len(), |i, j| estimate[(i, self.column_unit[j])])
    }

    /// The merged data as an observation set at unit midpoints. Empty units
    /// remain as all-zero mask columns.
    pub fn to_observation_set(&self, template: &ObservationSet) -> ObservationSet {
        ObservationSet {
            values: self.values.clone(),
            mask: self.mask.clone(),
            times: self.unit_times(),
            coords: template.coords.clone(),
            meta: template.meta.clone(),
        }
    }
}

fn bucket(t: f64, origin: f64, unit: f64, units: usize) -> usize {
    let raw = ((t - origin) / unit).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(units - 1)
    }
}

/// Buckets columns by `⌊(t − t₀)/unit_length⌋` and averages each subarea's
/// submissions per unit. `P = ceil(span / unit_length)`, at least 1; the last
/// timestamp is clamped into unit `P − 1`.
pub fn discretize_merge(obs: &ObservationSet, unit_length: f64) -> Result<DiscreteObservation> {
    if !(unit_length > 0.0 && unit_length.is_finite()) {
        return Err(Error::Parameter(format!("unit length must be positive, got {unit_length}")));
    }
    let n = obs.n_subareas();
    let origin = obs.times.first().copied().unwrap_or(0.0);
    let span = obs.times.last().copied().unwrap_or(origin) - origin;
    let units = ((span / unit_length).ceil() as usize).max(1);

    let mut sums = DenseMatrix::zeros(n, units);
    let mut counts = DenseMatrix::zeros(n, units);
    let mut column_unit = Vec::with_capacity(obs.n_columns());
    for (j, &t) in obs.times.iter().enumerate() {
        let p = bucket(t, origin, unit_length, units);
        column_unit.push(p);
        for i in 0..n {
            if obs.is_observed(i, j) {
                sums[(i, p)] += obs.values[(i, j)];
                counts[(i, p)] += 1.0;
            }
        }
    }
    let mut values = DenseMatrix::filled(n, units, SENTINEL);
    let mut mask = DenseMatrix::zeros(n, units);
    for i in 0..n {
        for p in 0..units {
            let c = counts[(i, p)];
            if c > 0.0 {
                values[(i, p)] = sums[(i, p)] / c;
                mask[(i, p)] = 1.0;
            }
        }
    }
    Ok(DiscreteObservation {
        unit_length,
        origin,
        units,
        values,
        mask,
        column_unit,
    })
}
