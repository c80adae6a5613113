use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, GradientMap, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<ParamId, (DenseMatrix, DenseMatrix)>,
    lr_scale: BTreeMap<ParamId, f64>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
            lr_scale: BTreeMap::new(),
        }
    }

    /// Multiplies the step size of one parameter by `scale`.
    pub fn set_lr_scale(&mut self, id: ParamId, scale: f64) {
        self.lr_scale.insert(id, scale);
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> Option<&DenseMatrix> {
        self.moments.get(&id).map(|(m, _)| m)
    }

    pub fn second_moment(&self, id: ParamId) -> Option<&DenseMatrix> {
        self.moments.get(&id).map(|(_, v)| v)
    }

    /// One bias-corrected Adam update of every trainable parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradientMap) -> Result<()> {
        let ids: Vec<ParamId> = params.trainable_ids().collect();
        for &id in &ids {
            let g = grads.get(id).ok_or_else(|| {
                Error::Gradient(format!("no gradient for trainable parameter '{}'", params.get(id).name))
            })?;
            params.value(id).check_same(g, "adam_step")?;
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for id in ids {
            let g = grads.get(id).expect("checked above");
            let lr = lr * self.lr_scale.get(&id).copied().unwrap_or(1.0);
            let (r, c) = g.shape();
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (DenseMatrix::zeros(r, c), DenseMatrix::zeros(r, c)));
            let theta = params.value_mut(id).as_mut_slice();
            for (((th, gi), mi), vi) in theta
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *th -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("theta", DenseMatrix::filled(1, 1, v), true);
        (s, id)
    }

    fn grad(id: ParamId, g: f64) -> GradientMap {
        let mut m = GradientMap::new();
        m.insert(id, DenseMatrix::filled(1, 1, g));
        m
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = scalar_store(1.0);
        let mut opt = OptimizerState::new(AdamConfig { lr: 0.1, ..Default::default() });
        opt.step(&mut s, &grad(id, 1.0)).unwrap();
        assert!((s.value(id).as_slice()[0] - 0.9).abs() < 1e-6);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let (mut s, id) = scalar_store(0.3);
        let mut opt = OptimizerState::new(AdamConfig::default());
        opt.step(&mut s, &grad(id, 0.0)).unwrap();
        assert_eq!(s.value(id).as_slice()[0], 0.3);
        assert_eq!(opt.first_moment(id).unwrap().as_slice(), &[0.0]);
        assert_eq!(opt.second_moment(id).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn two_steps_match_hand_recursion() {
        // m1 = 0.1, v1 = 0.001; m̂ = 1, v̂ = 1 -> θ1 = θ0 - 0.1/(1 + 1e-8)
        // m2 = 0.09 - 0.1 = -0.01, v2 = 0.000999 + 0.001 = 0.001999
        // m̂2 = -0.01/0.19, v̂2 = 0.001999/0.001999 = 1
        let theta0 = 0.5_f64;
        let eps = 1e-8;
        let theta1 = theta0 - 0.1 * 1.0 / (1.0 + eps);
        let m2 = 0.9 * 0.1 + 0.1 * -1.0;
        let v2 = 0.999 * 0.001 + 0.001 * 1.0;
        let m_hat = m2 / (1.0 - 0.9f64.powi(2));
        let v_hat = v2 / (1.0 - 0.999f64.powi(2));
        let theta2 = theta1 - 0.1 * m_hat / (v_hat.sqrt() + eps);

        let (mut s, id) = scalar_store(theta0);
        let mut opt = OptimizerState::new(AdamConfig { lr: 0.1, ..Default::default() });
        opt.step(&mut s, &grad(id, 1.0)).unwrap();
        assert!((s.value(id).as_slice()[0] - theta1).abs() < 1e-15);
        opt.step(&mut s, &grad(id, -1.0)).unwrap();
        assert!((s.value(id).as_slice()[0] - theta2).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let (mut s, _) = scalar_store(1.0);
        let mut opt = OptimizerState::new(AdamConfig::default());
        assert!(matches!(opt.step(&mut s, &GradientMap::new()), Err(Error::Gradient(_))));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn frozen_parameter_untouched() {
        let mut s = ParamStore::new();
        let a = s.add("a", DenseMatrix::filled(1, 1, 1.0), true);
        let b = s.add("b", DenseMatrix::filled(1, 1, 1.0), false);
        let mut g = grad(a, 1.0);
        g.insert(b, DenseMatrix::filled(1, 1, 1.0));
        let mut opt = OptimizerState::new(AdamConfig::default());
        opt.step(&mut s, &g).unwrap();
        assert_eq!(s.value(b).as_slice()[0], 1.0);
        assert!(s.value(a).as_slice()[0] < 1.0);
    }
}
