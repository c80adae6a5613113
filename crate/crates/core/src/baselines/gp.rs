use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::knn::global_mean;
use super::{BaselineReport, BaselineResult};
use crate::dataio::ObservationSet;
use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// λ in `(1−λ)Σ + λ·diag(Σ)`.
    pub shrinkage: f64,
    /// Increment applied to λ while a block stays non-positive-definite.
    pub shrinkage_step: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            shrinkage: 0.1,
            shrinkage_step: 0.1,
        }
    }
}

/// Relative pivot threshold below which a Cholesky factorization is treated
/// as failed.
const PIVOT_TOL: f64 = 1e-12;

/// Per-subarea mean and pairwise-complete covariance over columns.
pub(crate) fn moments(obs: &ObservationSet) -> (Vec<f64>, DenseMatrix, Vec<String>) {
    let (n, m) = obs.values.shape();
    let global = global_mean(obs);
    let mut flags = Vec::new();
    let mu: Vec<f64> = (0..n)
        .map(|i| {
            let vals: Vec<f64> = (0..m).filter(|&j| obs.is_observed(i, j)).map(|j| obs.values[(i, j)]).collect();
            if vals.is_empty() {
                flags.push(format!("subarea {i} never observed; global mean used"));
                global
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();

    let mut cov = DenseMatrix::zeros(n, n);
    let mut have_var = vec![false; n];
    for a in 0..n {
        for b in a..n {
            let common: Vec<usize> = (0..m).filter(|&j| obs.is_observed(a, j) && obs.is_observed(b, j)).collect();
            let needed = if a == b { 2 } else { 1 };
            if common.len() < needed {
                continue;
            }
            let c = common
                .iter()
                .map(|&j| (obs.values[(a, j)] - mu[a]) * (obs.values[(b, j)] - mu[b]))
                .sum::<f64>()
                / common.len() as f64;
            cov[(a, b)] = c;
            cov[(b, a)] = c;
            if a == b {
                have_var[a] = true;
            }
        }
    }
    let known: Vec<f64> = (0..n).filter(|&i| have_var[i]).map(|i| cov[(i, i)]).collect();
    let pooled = if known.is_empty() {
        global_variance(obs, global)
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    };
    let floor = pooled.abs().max(f64::MIN_POSITIVE) * PIVOT_TOL;
    for i in 0..n {
        if !have_var[i] {
            cov[(i, i)] = pooled;
        }
        cov[(i, i)] = cov[(i, i)].max(floor);
    }
    (mu, cov, flags)
}

fn global_variance(obs: &ObservationSet, mean: f64) -> f64 {
    let vals: Vec<f64> = obs
        .values
        .as_slice()
        .iter()
        .zip(obs.mask.as_slice())
        .filter(|(_, m)| **m != 0.0)
        .map(|(v, _)| (v - mean).powi(2))
        .collect();
    if vals.is_empty() {
        1.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Lower Cholesky factor, or `None` when a pivot falls below the relative
/// threshold.
fn cholesky(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > PIVOT_TOL * scale) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

fn shrink(cov: &DenseMatrix, lambda: f64) -> DenseMatrix {
    let n = cov.rows();
    DenseMatrix::from_fn(n, n, |a, b| if a == b { cov[(a, a)] } else { (1.0 - lambda) * cov[(a, b)] })
}

fn try_conditional(mu: &[f64], cov: &DenseMatrix, observed: &[(usize, f64)]) -> Option<Vec<f64>> {
    let b_idx: Vec<usize> = observed.iter().map(|o| o.0).collect();
    let sbb = DenseMatrix::from_fn(b_idx.len(), b_idx.len(), |p, q| cov[(b_idx[p], b_idx[q])]);
    let l = cholesky(&sbb)?;
    let resid: Vec<f64> = observed.iter().map(|&(i, v)| v - mu[i]).collect();
    let w = cholesky_solve(&l, &resid);
    let mut out: Vec<f64> = (0..mu.len())
        .map(|a| mu[a] + b_idx.iter().zip(&w).map(|(&b, wb)| cov[(a, b)] * wb).sum::<f64>())
        .collect();
    for &(i, v) in observed {
        out[i] = v;
    }
    Some(out)
}

/// `E[y | y_B]` for `y ~ N(mu, cov)`: observed coordinates keep their value,
/// the rest get `μ_A + Σ_AB Σ_BB⁻¹ (y_B − μ_B)`.
pub fn conditional_mean(mu: &[f64], cov: &DenseMatrix, observed: &[(usize, f64)]) -> Result<Vec<f64>> {
    let n = mu.len();
    if cov.shape() != (n, n) {
        return Err(Error::Dimension {
            op: "conditional_mean",
            lhs: (n, 1),
            rhs: cov.shape(),
        });
    }
    if let Some(&(i, _)) = observed.iter().find(|o| o.0 >= n) {
        return Err(Error::Input(format!("observed index {i} out of range for {n} variables")));
    }
    try_conditional(mu, cov, observed)
        .ok_or_else(|| Error::Input("covariance of the observed block is not positive definite".into()))
}

/// Conditional-mean imputation under one multivariate Gaussian over
/// subareas, using the shrunk covariance.
pub fn gp_complete(obs: &ObservationSet, cfg: &GpConfig) -> Result<BaselineResult> {
    let start = Instant::now();
    obs.validate()?;
    if obs.n_columns() < 2 {
        return Err(Error::Input("gaussian imputation needs at least 2 columns".into()));
    }
    if !(0.0..=1.0).contains(&cfg.shrinkage) || !(cfg.shrinkage_step > 0.0) {
        return Err(Error::Parameter(format!(
            "shrinkage must lie in [0, 1] with a positive step, got {} / {}",
            cfg.shrinkage, cfg.shrinkage_step
        )));
    }
    let m = obs.n_columns();
    let (mu, cov, mut flags) = moments(obs);
    let base = shrink(&cov, cfg.shrinkage);
    let mut est = obs.values.clone();
    for j in 0..m {
        let observed: Vec<(usize, f64)> = obs.observed_rows(j).into_iter().map(|i| (i, obs.values[(i, j)])).collect();
        if observed.len() == obs.n_subareas() {
            continue;
        }
        let mut lambda = cfg.shrinkage;
        let mut column = try_conditional(&mu, &base, &observed);
        while column.is_none() && lambda < 1.0 {
            lambda = (lambda + cfg.shrinkage_step).min(1.0);
            column = try_conditional(&mu, &shrink(&cov, lambda), &observed);
        }
        if lambda != cfg.shrinkage {
            flags.push(format!("column {j}: shrinkage raised to {lambda}"));
        }
        let column = column.unwrap_or_else(|| {
            flags.push(format!("column {j}: covariance not factorable; means used"));
            let mut c = mu.clone();
            for &(i, v) in &observed {
                c[i] = v;
            }
            c
        });
        est.set_column(j, &column);
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
