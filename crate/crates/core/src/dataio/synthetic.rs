//! Synthetic ground-truth fields.
//!
//! `smooth-field` places subareas uniformly in the unit square and sums a few
//! travelling sinusoids whose phase depends on position, so nearby subareas
//! are correlated and each subarea's series is smooth in time. `seasonal`
//! adds a daily component on top. `rank1` is an exact outer product.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Coords, GroundTruth, Meta};
use crate::error::{Error, Result};
use crate::numkit::{standard_normal, unit_f64, DenseMatrix};

pub const DAY_SECONDS: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    SmoothField,
    Rank1,
    Seasonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_span")]
    pub span_seconds: f64,
    pub seed: u64,
}

fn default_span() -> f64 {
    7.0 * DAY_SECONDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub omega: f64,
    /// Per-subarea phase.
    pub phases: Vec<f64>,
}

/// Noise-free continuous description of a synthetic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SyntheticField {
    Waves {
        waves: Vec<Wave>,
    },
    Rank1 {
        u: Vec<f64>,
        omega: f64,
        phase: f64,
    },
}

impl SyntheticField {
    pub fn eval(&self, i: usize, t: f64) -> f64 {
        match self {
            SyntheticField::Waves { waves } => waves
                .iter()
                .map(|w| w.amplitude * (w.omega * t + w.phases[i]).sin())
                .sum(),
            SyntheticField::Rank1 { u, omega, phase } => u[i] * rank1_profile(*omega, *phase, t),
        }
    }

    pub fn column(&self, n: usize, t: f64) -> Vec<f64> {
        (0..n).map(|i| self.eval(i, t)).collect()
    }
}

fn rank1_profile(omega: f64, phase: f64, t: f64) -> f64 {
    1.0 + 0.5 * (omega * t + phase).sin()
}

/// Relative noise level added to `smooth-field` and `seasonal` samples.
const NOISE: f64 = 0.02;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GroundTruth> {
    let SyntheticSpec {
        kind,
        n,
        m,
        span_seconds,
        seed,
    } = *spec;
    if n < 2 || m < 2 {
        return Err(Error::Parameter(format!("synthetic field needs n, m >= 2, got {n}x{m}")));
    }
    if !(span_seconds > 0.0 && span_seconds.is_finite()) {
        return Err(Error::Parameter(format!("span must be positive, got {span_seconds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let times = sorted_uniform_times(&mut rng, m, span_seconds);
    let coords: Coords = (0..n).map(|_| [unit_f64(&mut rng), unit_f64(&mut rng)]).collect();

    let field = match kind {
        SyntheticKind::Rank1 => SyntheticField::Rank1 {
            u: (0..n).map(|_| 0.5 + 1.5 * unit_f64(&mut rng)).collect(),
            omega: TAU * (1.0 + 2.0 * unit_f64(&mut rng)) / span_seconds,
            phase: TAU * unit_f64(&mut rng),
        },
        SyntheticKind::SmoothField | SyntheticKind::Seasonal => {
            let mut waves = Vec::new();
            // slow, medium, fast cycles over the span
            for cycles in [1.0, 2.5, 4.0] {
                let amplitude = 0.6 + 0.8 * unit_f64(&mut rng);
                let omega = TAU * cycles * (0.8 + 0.4 * unit_f64(&mut rng)) / span_seconds;
                let base = TAU * unit_f64(&mut rng);
                let angle = TAU * unit_f64(&mut rng);
                let k = 0.4 + 0.6 * unit_f64(&mut rng);
                let (kx, ky) = (TAU * k * angle.cos(), TAU * k * angle.sin());
                let phases = coords.iter().map(|c| base + kx * c[0] + ky * c[1]).collect();
                waves.push(Wave {
                    amplitude,
                    omega,
                    phases,
                });
            }
            if kind == SyntheticKind::Seasonal {
                let base = TAU * unit_f64(&mut rng);
                let phases = coords.iter().map(|c| base + 0.5 * (c[0] - c[1])).collect();
                waves.push(Wave {
                    amplitude: 0.8,
                    omega: TAU / DAY_SECONDS,
                    phases,
                });
            }
            SyntheticField::Waves { waves }
        }
    };

    let noisy = kind != SyntheticKind::Rank1;
    let mut values = DenseMatrix::zeros(n, m);
    for (j, &t) in times.iter().enumerate() {
        for i in 0..n {
            values[(i, j)] = field.eval(i, t);
        }
    }
    if noisy {
        for v in values.as_mut_slice() {
            *v += NOISE * standard_normal(&mut rng);
        }
    }

    let name = match kind {
        SyntheticKind::SmoothField => "smooth-field",
        SyntheticKind::Rank1 => "rank1",
        SyntheticKind::Seasonal => "seasonal",
    };
    let mut gt = GroundTruth::new(values, times, Meta::named(name, n))?;
    gt.coords = Some(coords);
    gt.field = Some(field);
    Ok(gt)
}

/// `m` sorted uniform draws on `[0, span]`, nudged to be strictly increasing.
fn sorted_uniform_times(rng: &mut ChaCha8Rng, m: usize, span: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..m).map(|_| span * unit_f64(rng)).collect();
    t.sort_by(f64::total_cmp);
    for j in 1..m {
        if t[j] <= t[j - 1] {
            t[j] = t[j - 1].next_up();
        }
    }
    t
}

/// Exact outer product `u vᵀ` on the given timestamps.
pub fn rank1_ground_truth(u: &[f64], v: &[f64], times: Vec<f64>) -> Result<GroundTruth> {
    let values = DenseMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j]);
    GroundTruth::new(values, times, Meta::named("rank1", u.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SyntheticKind, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            kind,
            n: 12,
            m: 200,
            span_seconds: default_span(),
            seed,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&spec(SyntheticKind::SmoothField, 5)).unwrap();
        let b = generate_synthetic(&spec(SyntheticKind::SmoothField, 5)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec(SyntheticKind::SmoothField, 6)).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn rank1_outer_product() {
        let gt = rank1_ground_truth(&[1.0, 2.0], &[1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(gt.values, DenseMatrix::from_rows(&[vec![1.0; 3], vec![2.0; 3]]));
    }

    #[test]
    fn generated_rank1_has_vanishing_minors() {
        let gt = generate_synthetic(&spec(SyntheticKind::Rank1, 2)).unwrap();
        let y = &gt.values;
        for i in 1..y.rows() {
            for j in 1..y.cols() {
                let minor = y[(0, 0)] * y[(i, j)] - y[(0, j)] * y[(i, 0)];
                assert!(minor.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smooth_field_is_autocorrelated() {
        for kind in [SyntheticKind::SmoothField, SyntheticKind::Seasonal] {
            let gt = generate_synthetic(&spec(kind, 11)).unwrap();
            let y = &gt.values;
            let mut total = 0.0;
            for i in 0..y.rows() {
                let row = y.row(i);
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum();
                let cov: f64 = row.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
                total += cov / var;
            }
            let avg = total / y.rows() as f64;
            assert!(avg > 0.5, "{kind:?}: lag-1 autocorrelation {avg}");
        }
    }

    #[test]
    fn times_sorted_within_span() {
        let gt = generate_synthetic(&spec(SyntheticKind::Seasonal, 1)).unwrap();
        assert!(gt.times.windows(2).all(|w| w[0] < w[1]));
        assert!(gt.times[0] >= 0.0 && *gt.times.last().unwrap() <= default_span());
    }

    #[test]
    fn rejects_tiny_shapes() {
        let mut s = spec(SyntheticKind::SmoothField, 1);
        s.n = 1;
        assert!(generate_synthetic(&s).is_err());
    }
}
