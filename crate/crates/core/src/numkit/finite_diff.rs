use super::{DenseMatrix, GradientMap, ParamStore};
use crate::error::{Error, Result};

/// Central-difference gradient `(f(θ+h) − f(θ−h)) / 2h` for every coordinate of
/// every trainable parameter.
pub fn finite_diff_gradients<F>(loss_fn: F, params: &ParamStore, h: f64) -> Result<GradientMap>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    let mut work = params.clone();
    let mut out = GradientMap::new();
    for id in params.trainable_ids() {
        let (r, c) = params.value(id).shape();
        let mut grad = DenseMatrix::zeros(r, c);
        for k in 0..r * c {
            let orig = params.value(id).as_slice()[k];

            work.value_mut(id).as_mut_slice()[k] = orig + h;
            let plus = loss_fn(&work)?;
            work.value_mut(id).as_mut_slice()[k] = orig - h;
            let minus = loss_fn(&work)?;
            work.value_mut(id).as_mut_slice()[k] = orig;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!(
                        "finite difference of parameter '{}' at coordinate ({}, {})",
                        params.get(id).name,
                        k / c,
                        k % c
                    ),
                });
            }
            grad.as_mut_slice()[k] = (plus - minus) / (2.0 * h);
        }
        out.insert(id, grad);
    }
    Ok(out)
}

/// Largest elementwise relative error `|a − b| / max(|a|, |b|, floor)` across
/// two gradient maps. Entries present in only one map count as infinite error.
pub fn max_relative_error(analytic: &GradientMap, numeric: &GradientMap, abs_floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (id, a) in analytic.iter() {
        let Some(n) = numeric.get(id) else {
            return f64::INFINITY;
        };
        if a.shape() != n.shape() {
            return f64::INFINITY;
        }
        for (x, y) in a.as_slice().iter().zip(n.as_slice()) {
            let denom = x.abs().max(y.abs()).max(abs_floor);
            let err = (x - y).abs();
            // differences below the absolute floor are treated as agreement
            let rel = if err <= abs_floor { 0.0 } else { err / denom };
            worst = worst.max(rel);
        }
    }
    if numeric.len() != analytic.len() {
        return f64::INFINITY;
    }
    worst
}
