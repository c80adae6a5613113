use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, ModelKind};
use super::model::Model;
use crate::dataio::{normalize, AffineTransform, ObservationSet};
use crate::error::{Error, Result};
use crate::numkit::{AdamConfig, DenseMatrix, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Optimizer steps taken.
    pub epochs: usize,
    /// Masked loss (normalized units) of the returned parameters.
    pub final_loss: f64,
    pub wall_ms: f64,
    /// Loss before each step.
    pub loss_trace: Vec<f64>,
    /// False when training stopped at `max_epochs`.
    pub converged: bool,
    pub parameter_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub kind: ModelKind,
    /// Ŷ, N × M, in the units of the input.
    pub estimate: DenseMatrix,
    /// Z, r × M, the latent columns fed to the decoder.
    pub latent: DenseMatrix,
    pub report: TrainingReport,
    pub transform: AffineTransform,
}

impl CompletionResult {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &TrainingReport| TrainingReport { wall_ms: 0.0, ..r.clone() };
        self.kind == other.kind
            && self.estimate == other.estimate
            && self.latent == other.latent
            && self.transform == other.transform
            && strip(&self.report) == strip(&other.report)
    }
}

/// True once the loss improved by less than `tol` (relative) over the last
/// `patience` epochs.
fn plateaued(trace: &[f64], patience: usize, tol: f64) -> bool {
    if trace.len() <= patience {
        return false;
    }
    let now = trace[trace.len() - 1];
    let then = trace[trace.len() - 1 - patience];
    if then == 0.0 {
        return true;
    }
    (then - now) / then.abs() < tol
}

/// Full-batch Adam on the masked loss of `obs` (already normalized) until
/// the loss plateaus or `max_epochs` steps were taken.
pub fn fit(model: &mut Model, obs: &ObservationSet) -> Result<TrainingReport> {
    let start = Instant::now();
    let cfg = model.config().clone();
    let mut opt = OptimizerState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut trace = Vec::new();
    let mut converged = false;
    for epoch in 0..cfg.max_epochs {
        let (loss, grads) = model.loss_and_gradients(obs)?;
        if !loss.is_finite() || !grads.global_norm().is_finite() {
            return Err(divergence(epoch, &trace));
        }
        trace.push(loss);
        if plateaued(&trace, cfg.patience, cfg.tol) {
            converged = true;
            break;
        }
        opt.step(model.store_mut(), &grads)?;
    }
    let final_loss = model.loss(obs)?;
    if !final_loss.is_finite() {
        return Err(divergence(opt.step_count() as usize, &trace));
    }
    Ok(TrainingReport {
        epochs: opt.step_count() as usize,
        final_loss,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        loss_trace: trace,
        converged,
        parameter_count: model.parameter_count(),
    })
}

fn divergence(epoch: usize, trace: &[f64]) -> Error {
    Error::Divergence {
        epoch,
        last_finite_epoch: trace.len().saturating_sub(1),
        last_finite_loss: trace.last().copied().unwrap_or(f64::NAN),
    }
}

/// Normalizes, builds and fits a model; returns it with its result.
pub fn train_model(obs: &ObservationSet, cfg: &ModelConfig, kind: ModelKind) -> Result<(Model, CompletionResult)> {
    obs.validate()?;
    let (norm, transform) = normalize(obs)?;
    let mut model = Model::new(kind, cfg, obs.n_subareas(), &obs.times)?;
    let report = fit(&mut model, &norm)?;
    let (est, latent) = model.predict()?;
    let result = CompletionResult {
        kind,
        estimate: transform.invert_matrix(&est),
        latent,
        report,
        transform,
    };
    Ok((model, result))
}

/// Completes `obs` with the chosen model.
pub fn train(obs: &ObservationSet, cfg: &ModelConfig, kind: ModelKind) -> Result<CompletionResult> {
    train_model(obs, cfg, kind).map(|(_, r)| r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_detection() {
        assert!(!plateaued(&[3.0, 2.0], 2, 1e-5));
        assert!(!plateaued(&[3.0, 2.0, 1.0], 2, 1e-5));
        assert!(plateaued(&[1.0, 1.0, 1.0], 2, 1e-5));
        assert!(plateaued(&[0.0, 0.0, 0.0], 2, 1e-5));
    }

    #[test]
    fn divergence_carries_last_finite_epoch() {
        let Error::Divergence {
            epoch,
            last_finite_epoch,
            last_finite_loss,
        } = divergence(4, &[3.0, 2.0, 1.5, 1.2])
        else {
            unreachable!()
        };
        assert_eq!((epoch, last_finite_epoch, last_finite_loss), (4, 3, 1.2));
    }
}
