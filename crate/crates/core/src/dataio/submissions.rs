use serde::{Deserialize, Serialize};

use super::{Meta, ObservationSet};
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// One worker report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub time: f64,
    pub subarea: usize,
    pub value: f64,
}

/// Stacks submissions into columns. Submissions sharing a timestamp share a
/// column; a repeated `(time, subarea)` pair is an input error.
pub fn to_observation_set(subs: &[Submission], n: usize) -> Result<ObservationSet> {
    if subs.is_empty() {
        return Err(Error::Input("no submissions".into()));
    }
    for s in subs {
        if !s.time.is_finite() {
            return Err(Error::Input(format!("non-finite submission time {}", s.time)));
        }
        if s.subarea >= n {
            return Err(Error::Input(format!("subarea {} outside 0..{n}", s.subarea)));
        }
        if !s.value.is_finite() {
            return Err(Error::Input(format!("non-finite value at t = {}", s.time)));
        }
    }
    let mut sorted = subs.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.subarea.cmp(&b.subarea)));

    let mut times: Vec<f64> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
    for (k, s) in sorted.iter().enumerate() {
        if times.last() != Some(&s.time) {
            times.push(s.time);
        } else if sorted[k - 1].subarea == s.subarea {
            return Err(Error::Input(format!(
                "duplicate submission for subarea {} at t = {}",
                s.subarea, s.time
            )));
        }
        cells.push((s.subarea, times.len() - 1, s.value));
    }

    let m = times.len();
    let mut values = DenseMatrix::zeros(n, m);
    let mut mask = DenseMatrix::zeros(n, m);
    for (i, j, v) in cells {
        values[(i, j)] = v;
        mask[(i, j)] = 1.0;
    }
    ObservationSet::new(values, mask, times, Meta::named("submissions", n))
}
