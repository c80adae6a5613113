use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Uniform on ±sqrt(6 / (fan_in + fan_out)), fan_in = cols, fan_out = rows.
    XavierUniform,
    /// Uniform on (−a, a).
    Uniform(f64),
}

/// Uniform double in [0, 1) from the top 53 bits of one `next_u64` draw.
#[inline]
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index in `0..bound` by 128-bit multiply-shift of one `next_u64` draw.
#[inline]
pub fn uniform_index(rng: &mut impl RngCore, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Standard normal draw (Box–Muller, one of the pair).
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - unit_f64(rng);
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fills a `rows × cols` matrix in row-major order, each entry
/// `-a + 2a · unit_f64(rng)`.
pub fn init_params(shape: (usize, usize), scheme: InitScheme, rng: &mut impl RngCore) -> Result<DenseMatrix> {
    let (rows, cols) = shape;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyShape(shape));
    }
    let bound = match scheme {
        InitScheme::XavierUniform => (6.0 / (rows + cols) as f64).sqrt(),
        InitScheme::Uniform(a) => {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Parameter(format!("uniform bound must be positive, got {a}")));
            }
            a
        }
    };
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| -bound + 2.0 * bound * unit_f64(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic() {
        let a = init_params((3, 5), InitScheme::XavierUniform, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_params((3, 5), InitScheme::XavierUniform, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_bound() {
        let m = init_params((4, 4), InitScheme::XavierUniform, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bound = (6.0f64 / 8.0).sqrt();
        assert!(m.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_shape_rejected() {
        let err = init_params((0, 3), InitScheme::XavierUniform, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(err, Err(Error::EmptyShape((0, 3)))));
    }

    #[test]
    fn uniform_index_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for bound in 1..50 {
            assert!(uniform_index(&mut rng, bound) < bound);
        }
    }
}
