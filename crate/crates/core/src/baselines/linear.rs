use crate::dataio::ObservationSet;
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPrediction {
    /// N × Q, one column per query time.
    pub values: DenseMatrix,
    /// Subareas with fewer than two observations; their rows hold the
    /// subarea mean (or the global mean when never observed).
    pub flagged: Vec<usize>,
}

/// Least-squares line `v = intercept + slope · t` through the points.
/// Returns `(slope, intercept)`; `None` with fewer than two distinct times.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let vm = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stv, mut stt) = (0.0, 0.0);
    for (t, v) in points {
        stv += (t - tm) * (v - vm);
        stt += (t - tm) * (t - tm);
    }
    if stt <= 0.0 {
        return None;
    }
    let slope = stv / stt;
    Some((slope, vm - slope * tm))
}

/// Per-subarea linear regression over time, evaluated at every query time.
pub fn linear_predict_many(obs: &ObservationSet, ts: &[f64]) -> Result<LinearPrediction> {
    obs.validate()?;
    if let Some(t) = ts.iter().find(|t| !t.is_finite()) {
        return Err(Error::Input(format!("query time {t} is not finite")));
    }
    let (n, m) = obs.values.shape();
    let global = super::knn::global_mean(obs);
    let mut values = DenseMatrix::zeros(n, ts.len());
    let mut flagged = Vec::new();
    for i in 0..n {
        let points: Vec<(f64, f64)> = (0..m)
            .filter(|&j| obs.is_observed(i, j))
            .map(|j| (obs.times[j], obs.values[(i, j)]))
            .collect();
        match linear_fit(&points) {
            Some((slope, intercept)) => {
                for (q, t) in ts.iter().enumerate() {
                    values[(i, q)] = intercept + slope * t;
                }
            }
            None => {
                flagged.push(i);
                let fallback = if points.is_empty() {
                    global
                } else {
                    points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64
                };
                for q in 0..ts.len() {
                    values[(i, q)] = fallback;
                }
            }
        }
    }
    Ok(LinearPrediction { values, flagged })
}

/// Column estimate at `t_query`.
pub fn linear_predict(obs: &ObservationSet, t_query: f64) -> Result<LinearPrediction> {
    linear_predict_many(obs, &[t_query])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Meta;

    #[test]
    fn exact_line() {
        let values = DenseMatrix::from_rows(&[vec![0.0, 2.0]]);
        let mask = DenseMatrix::filled(1, 2, 1.0);
        let obs = ObservationSet::new(values, mask, vec![0.0, 2.0], Meta::named("x", 1)).unwrap();
        let p = linear_predict(&obs, 1.0).unwrap();
        assert_eq!(p.values[(0, 0)], 1.0);
        assert!(p.flagged.is_empty());
    }

    #[test]
    fn constant_series() {
        let values = DenseMatrix::from_rows(&[vec![3.5, 3.5, 3.5]]);
        let mask = DenseMatrix::filled(1, 3, 1.0);
        let obs = ObservationSet::new(values, mask, vec![0.0, 1.0, 5.0], Meta::named("x", 1)).unwrap();
        for t in [-10.0, 2.0, 100.0] {
            assert_eq!(linear_predict(&obs, t).unwrap().values[(0, 0)], 3.5);
        }
    }

    #[test]
    fn sparse_subarea_is_flagged() {
        let values = DenseMatrix::from_rows(&[vec![1.0, 3.0], vec![7.0, 0.0]]);
        let mask = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]);
        let obs = ObservationSet::new(values, mask, vec![0.0, 1.0], Meta::named("x", 2)).unwrap();
        let p = linear_predict(&obs, 0.5).unwrap();
        assert_eq!(p.flagged, vec![1]);
        assert_eq!(p.values.column(0), vec![2.0, 7.0]);
    }
}
