use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Meta, ObservationSet};
use crate::error::Result;
use crate::models::{Model, ModelConfig, ModelKind};
use crate::numkit::{finite_diff_gradients, max_relative_error, DenseMatrix};

pub const FD_STEP: f64 = 1e-5;
pub const ABS_FLOOR: f64 = 1e-8;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub kind: ModelKind,
    pub seed: u64,
    pub instances: usize,
    /// Largest relative error over every trainable coordinate of every instance.
    pub max_rel_error: f64,
    /// Largest absolute difference; differences up to `ABS_FLOOR` count as
    /// agreement in `max_rel_error`.
    pub max_abs_error: f64,
    /// Trainable coordinates compared.
    pub coordinates: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOL
    }
}

/// A small random instance (N ≤ 6, M ≤ 8) and matching model config
/// (hidden ≤ 4).
pub fn gradcheck_instance(rng: &mut ChaCha8Rng, seed: u64) -> Result<(ObservationSet, ModelConfig)> {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(2..=8);
    let mut values = DenseMatrix::zeros(n, m);
    let mut mask = DenseMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            if rng.gen_bool(0.5) {
                mask[(i, j)] = 1.0;
                values[(i, j)] = rng.gen_range(-2.0..2.0);
            }
        }
    }
    let mut t = 0.0;
    let times = (0..m)
        .map(|_| {
            t += rng.gen_range(0.2..4.0);
            t
        })
        .collect();
    let obs = ObservationSet::new(values, mask, times, Meta::named("gradcheck", n))?;
    let cfg = ModelConfig {
        latent_dim: rng.gen_range(1..=3),
        hidden_dim: rng.gen_range(1..=4),
        decoder_layers: vec![rng.gen_range(1..=4)],
        latent_init: 0.5,
        seed,
        ..Default::default()
    };
    Ok((obs, cfg))
}

/// Compares tape gradients of the training loss with central differences on
/// `instances` random instances derived from `seed`.
pub fn gradcheck(kind: ModelKind, seed: u64, instances: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut coordinates = 0;
    for k in 0..instances {
        let (obs, cfg) = gradcheck_instance(&mut rng, seed.wrapping_add(k as u64))?;
        let model = Model::new(kind, &cfg, obs.n_subareas(), &obs.times)?;
        let (_, analytic) = model.loss_and_gradients(&obs)?;
        let numeric = finite_diff_gradients(|s| model.loss_with(s, &obs), model.store(), FD_STEP)?;
        worst = worst.max(max_relative_error(&analytic, &numeric, ABS_FLOOR));
        for (id, a) in analytic.iter() {
            if let Some(n) = numeric.get(id) {
                worst_abs = a.as_slice().iter().zip(n.as_slice()).fold(worst_abs, |w, (x, y)| w.max((x - y).abs()));
            }
        }
        coordinates += model.parameter_count();
    }
    Ok(GradcheckReport {
        kind,
        seed,
        instances,
        max_rel_error: worst,
        max_abs_error: worst_abs,
        coordinates,
    })
}
