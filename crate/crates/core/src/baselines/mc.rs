use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BaselineReport, BaselineResult};
use crate::dataio::ObservationSet;
use crate::error::{Error, Result};
use crate::numkit::{init_params, observed_columns, AdamConfig, DenseMatrix, GradientMap, InitScheme, OptimizerState, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McOptimizer {
    Adam,
    /// Plain gradient descent.
    Gd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub optimizer: McOptimizer,
    pub lr: f64,
    pub max_epochs: usize,
    pub tol: f64,
    pub patience: usize,
    /// On a plateau the step size is multiplied by `lr_decay`; training ends
    /// once it would drop below `min_lr`.
    pub lr_decay: f64,
    pub min_lr: f64,
    /// Bound of the uniform init of both factors.
    pub init: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            optimizer: McOptimizer::Adam,
            lr: 1e-2,
            max_epochs: 3000,
            tol: 1e-5,
            patience: 20,
            lr_decay: 0.1,
            min_lr: 1e-5,
            init: 0.3,
            seed: 0,
        }
    }
}

/// Fits `Ŷ = P Z` with P N×r and Z r×M on the masked squared loss.
///
/// The step size decays on every plateau, so Adam settles instead of
/// hovering at a distance of about `lr` from the minimum.
///
/// Values are divided by the RMS of the observed cells before fitting and
/// multiplied back afterwards; a pure rescaling keeps the rank intact.
pub fn mc_complete(obs: &ObservationSet, rank: usize, cfg: &McConfig) -> Result<BaselineResult> {
    let start = Instant::now();
    obs.validate()?;
    if rank == 0 {
        return Err(Error::Parameter("matrix completion rank must be at least 1".into()));
    }
    if !(cfg.lr > 0.0) || cfg.patience == 0 || !(cfg.init > 0.0) {
        return Err(Error::Parameter("mc needs positive lr, patience and init".into()));
    }
    if !(cfg.lr_decay > 0.0 && cfg.lr_decay < 1.0) {
        return Err(Error::Parameter(format!("lr_decay must lie in (0, 1), got {}", cfg.lr_decay)));
    }
    let (n, m) = obs.values.shape();
    let count = obs.observed_count();
    if count == 0 {
        return Err(Error::Input("matrix completion needs at least one observation".into()));
    }
    let rms = (obs
        .values
        .as_slice()
        .iter()
        .zip(obs.mask.as_slice())
        .filter(|(_, c)| **c != 0.0)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        / count as f64)
        .sqrt();
    let scale = if rms > 0.0 { rms } else { 1.0 };
    let y = obs.values.scale(1.0 / scale);
    let c = &obs.mask;
    let cols = observed_columns(c) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let scheme = InitScheme::Uniform(cfg.init);
    let p_id = store.add("P", init_params((n, rank), scheme, &mut rng)?, true);
    let z_id = store.add("Z", init_params((rank, m), scheme, &mut rng)?, true);
    let mut adam = OptimizerState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });

    let residual = |store: &ParamStore| -> Result<(DenseMatrix, f64)> {
        let est = store.value(p_id).matmul(store.value(z_id))?;
        let mut e = est.sub(&y)?;
        let mut loss = 0.0;
        for (ei, ci) in e.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *ei *= ci;
            loss += *ei * *ei;
        }
        Ok((e, loss / (2.0 * cols)))
    };

    let mut trace = Vec::new();
    let mut epochs = 0;
    let mut plateau = false;
    let mut lr = cfg.lr;
    let mut window_start = 0;
    for epoch in 0..cfg.max_epochs {
        let (e, loss) = residual(&store)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                last_finite_epoch: trace.len().saturating_sub(1),
                last_finite_loss: trace.last().copied().unwrap_or(f64::NAN),
            });
        }
        trace.push(loss);
        if trace.len() - window_start > cfg.patience {
            let then = trace[trace.len() - 1 - cfg.patience];
            if then == 0.0 || (then - loss) / then.abs() < cfg.tol {
                if then == 0.0 || lr * cfg.lr_decay < cfg.min_lr {
                    plateau = true;
                    break;
                }
                lr *= cfg.lr_decay;
                adam.config.lr = lr;
                window_start = trace.len() - 1;
            }
        }
        // dL/dP = E Zᵀ / n, dL/dZ = Pᵀ E / n
        let gp = e.matmul(&store.value(z_id).transpose())?.scale(1.0 / cols);
        let gz = store.value(p_id).transpose().matmul(&e)?.scale(1.0 / cols);
        match cfg.optimizer {
            McOptimizer::Adam => {
                let mut grads = GradientMap::new();
                grads.insert(p_id, gp);
                grads.insert(z_id, gz);
                adam.step(&mut store, &grads)?;
            }
            McOptimizer::Gd => {
                let p = store.value(p_id).sub(&gp.scale(lr))?;
                let z = store.value(z_id).sub(&gz.scale(lr))?;
                *store.value_mut(p_id) = p;
                *store.value_mut(z_id) = z;
            }
        }
        epochs += 1;
    }
    let (_, final_loss) = residual(&store)?;
    let estimate = store.value(p_id).matmul(store.value(z_id))?.scale(scale);
    let mut flags = Vec::new();
    if !plateau {
        flags.push(format!("stopped at max_epochs {}", cfg.max_epochs));
    }
    Ok(BaselineResult {
        estimate,
        report: BaselineReport {
            epochs,
            final_loss: Some(final_loss),
            loss_trace: trace,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            flags,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Meta;

    #[test]
    fn full_rank_interpolates() {
        let values = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 0.2, -1.0]]);
        let mask = DenseMatrix::filled(2, 3, 1.0);
        let obs = ObservationSet::new(values, mask, vec![0.0, 1.0, 2.0], Meta::named("x", 2)).unwrap();
        let cfg = McConfig {
            max_epochs: 20_000,
            ..Default::default()
        };
        let r = mc_complete(&obs, 2, &cfg).unwrap();
        assert!(r.report.final_loss.unwrap() < 1e-8, "{:?}", r.report.final_loss);
    }

    #[test]
    fn zero_rank_rejected() {
        let v = DenseMatrix::filled(2, 2, 1.0);
        let obs = ObservationSet::new(v.clone(), v, vec![0.0, 1.0], Meta::named("x", 2)).unwrap();
        assert!(mc_complete(&obs, 0, &McConfig::default()).is_err());
    }
}
