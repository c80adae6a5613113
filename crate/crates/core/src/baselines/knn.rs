use std::time::Instant;

use super::{BaselineReport, BaselineResult};
use crate::dataio::{Coords, ObservationSet};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Pairwise subarea distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialIndex {
    dist: DenseMatrix,
}

impl SpatialIndex {
    /// Euclidean distances between planar coordinates.
    pub fn from_coords(coords: &Coords) -> Self {
        let n = coords.len();
        let dist = DenseMatrix::from_fn(n, n, |a, b| {
            let (p, q) = (coords[a], coords[b]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        });
        Self { dist }
    }

    /// `1 − |corr|` over columns where both subareas are observed. Pairs with
    /// fewer than two shared columns, or a constant series on the shared
    /// columns, get the maximum distance 1.
    pub fn from_correlation(obs: &ObservationSet) -> Self {
        let n = obs.n_subareas();
        let mut dist = DenseMatrix::zeros(n, n);
        for a in 0..n {
            for b in (a + 1)..n {
                let pairs: Vec<(f64, f64)> = (0..obs.n_columns())
                    .filter(|&j| obs.is_observed(a, j) && obs.is_observed(b, j))
                    .map(|j| (obs.values[(a, j)], obs.values[(b, j)]))
                    .collect();
                let d = match correlation(&pairs) {
                    Some(c) => (1.0 - c.abs()).max(0.0),
                    None => 1.0,
                };
                dist[(a, b)] = d;
                dist[(b, a)] = d;
            }
        }
        Self { dist }
    }

    /// Coordinates when the instance has them, correlation otherwise.
    pub fn for_instance(obs: &ObservationSet) -> Self {
        match &obs.coords {
            Some(c) => Self::from_coords(c),
            None => Self::from_correlation(obs),
        }
    }

    pub fn len(&self) -> usize {
        self.dist.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.rows() == 0
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[(a, b)]
    }

    pub fn distances(&self) -> &DenseMatrix {
        &self.dist
    }
}

fn correlation(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(x, y), (a, b)| (x + a / n, y + b / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Each missing cell takes the mean of the `k` nearest subareas observed in
/// the same column (all of them when fewer than `k`). Ties in distance go to
/// the lower subarea index. With nothing observed in the column the cell
/// falls back to its subarea's observed mean, then to the global mean
/// (flagged).
pub fn knn_s_complete(obs: &ObservationSet, k: usize, index: &SpatialIndex) -> Result<BaselineResult> {
    let start = Instant::now();
    obs.validate()?;
    if k == 0 {
        return Err(Error::Parameter("knn needs k >= 1".into()));
    }
    let (n, m) = obs.values.shape();
    if index.len() != n {
        return Err(Error::Dimension {
            op: "knn spatial index",
            lhs: index.distances().shape(),
            rhs: obs.values.shape(),
        });
    }
    let row_means = row_means(obs);
    let global = global_mean(obs);
    let mut flags = Vec::new();
    let mut est = obs.values.clone();
    for j in 0..m {
        let seen = obs.observed_rows(j);
        for i in 0..n {
            if obs.is_observed(i, j) {
                continue;
            }
            est[(i, j)] = if seen.is_empty() {
                match row_means[i] {
                    Some(v) => v,
                    None => {
                        flags.push(format!("cell ({i}, {j}) has no neighbour and no history"));
                        global
                    }
                }
            } else {
                let mut near = seen.clone();
                near.sort_by(|&a, &b| index.distance(i, a).total_cmp(&index.distance(i, b)).then(a.cmp(&b)));
                near.truncate(k);
                near.iter().map(|&a| obs.values[(a, j)]).sum::<f64>() / near.len() as f64
            };
        }
    }
    Ok(BaselineResult {
        estimate: est,
        report: BaselineReport {
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            flags,
            ..Default::default()
        },
    })
}

pub(crate) fn row_means(obs: &ObservationSet) -> Vec<Option<f64>> {
    (0..obs.n_subareas())
        .map(|i| {
            let vals: Vec<f64> = (0..obs.n_columns())
                .filter(|&j| obs.is_observed(i, j))
                .map(|j| obs.values[(i, j)])
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

pub(crate) fn global_mean(obs: &ObservationSet) -> f64 {
    let count = obs.observed_count();
    if count == 0 {
        return 0.0;
    }
    obs.values
        .as_slice()
        .iter()
        .zip(obs.mask.as_slice())
        .filter(|(_, m)| **m != 0.0)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / count as f64
}
