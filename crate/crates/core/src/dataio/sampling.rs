use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GroundTruth, ObservationSet, SENTINEL};
use crate::error::{Error, Result};
use crate::numkit::{uniform_index, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Exactly `k` sensed subareas per column.
    KeepKPerColumn(usize),
    /// `max(1, round(ratio · N))` sensed subareas per column.
    KeepRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub mode: MaskMode,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(mode: MaskMode, seed: u64) -> Self {
        Self { mode, seed }
    }

    pub fn keep_k(k: usize, seed: u64) -> Self {
        Self {
            mode: MaskMode::KeepKPerColumn(k),
            seed,
        }
    }

    /// Sensed cells per column for `n` subareas.
    pub fn per_column(&self, n: usize) -> Result<usize> {
        let k = match self.mode {
            MaskMode::KeepKPerColumn(k) => k,
            MaskMode::KeepRatio(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::Parameter(format!("keep ratio must be in (0, 1], got {r}")));
                }
                ((r * n as f64).round() as usize).max(1)
            }
        };
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if k > n {
            return Err(Error::Parameter(format!("k = {k} exceeds the {n} subareas")));
        }
        Ok(k)
    }
}

/// First `k` entries of a partial Fisher–Yates shuffle of `0..n`.
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_index(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Keeps `k` uniformly chosen cells per column; columns are processed left to
/// right from one generator seeded with `spec.seed`.
pub fn mask_columns(gt: &GroundTruth, spec: &MaskSpec) -> Result<ObservationSet> {
    let (n, m) = gt.values.shape();
    let k = spec.per_column(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mask = DenseMatrix::zeros(n, m);
    let mut values = DenseMatrix::filled(n, m, SENTINEL);
    for j in 0..m {
        for i in sample_indices(&mut rng, n, k) {
            mask[(i, j)] = 1.0;
            values[(i, j)] = gt.values[(i, j)];
        }
    }
    Ok(ObservationSet {
        values,
        mask,
        times: gt.times.clone(),
        coords: gt.coords.clone(),
        meta: gt.meta.clone(),
    })
}

/// Removes `⌊ratio · M⌋` uniformly chosen columns. Survivors keep their times.
pub fn delete_columns(gt: &GroundTruth, ratio: f64, seed: u64) -> Result<GroundTruth> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Parameter(format!("deletion ratio must be in [0, 1), got {ratio}")));
    }
    let m = gt.n_columns();
    let remove = ((ratio * m as f64) + 1e-9).floor() as usize;
    if m - remove < 2 {
        return Err(Error::Parameter(format!(
            "deleting {remove} of {m} columns leaves fewer than 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let removed = sample_indices(&mut rng, m, remove);
    let mut gone = vec![false; m];
    for j in removed {
        gone[j] = true;
    }
    let keep: Vec<usize> = (0..m).filter(|&j| !gone[j]).collect();
    Ok(gt.select_columns(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Meta;

    fn grid(n: usize, m: usize) -> GroundTruth {
        let values = DenseMatrix::from_fn(n, m, |i, j| (i * 100 + j) as f64 + 0.5);
        GroundTruth::new(values, (0..m).map(|j| j as f64).collect(), Meta::named("g", n)).unwrap()
    }

    #[test]
    fn keep_all_is_full_sensing() {
        let gt = grid(4, 6);
        let obs = mask_columns(&gt, &MaskSpec::keep_k(4, 1)).unwrap();
        assert!(obs.mask.as_slice().iter().all(|m| *m == 1.0));
        assert_eq!(obs.values, gt.values);
    }

    #[test]
    fn keep_one_column_sums() {
        let gt = grid(5, 100);
        let obs = mask_columns(&gt, &MaskSpec::keep_k(1, 3)).unwrap();
        for j in 0..100 {
            assert_eq!(obs.observed_rows(j).len(), 1);
        }
    }

    #[test]
    fn k_above_n_rejected() {
        let gt = grid(3, 4);
        assert!(matches!(mask_columns(&gt, &MaskSpec::keep_k(4, 1)), Err(Error::Parameter(_))));
    }

    #[test]
    fn keep_ratio_rounds() {
        let spec = MaskSpec {
            mode: MaskMode::KeepRatio(0.2),
            seed: 0,
        };
        assert_eq!(spec.per_column(10).unwrap(), 2);
        assert_eq!(spec.per_column(2).unwrap(), 1);
    }

    #[test]
    fn deletion_counts() {
        let gt = grid(2, 10);
        assert_eq!(delete_columns(&gt, 0.0, 1).unwrap(), gt);
        let half = delete_columns(&gt, 0.5, 1).unwrap();
        assert_eq!(half.n_columns(), 5);
        assert!(half.times.windows(2).all(|w| w[0] < w[1]));
        for (j, t) in half.times.iter().enumerate() {
            assert_eq!(half.values[(0, j)], *t + 0.5);
        }
    }

    #[test]
    fn deletion_needs_two_survivors() {
        let gt = grid(2, 3);
        assert!(delete_columns(&gt, 0.9, 1).is_err());
        assert!(delete_columns(&gt, 1.0, 1).is_err());
    }
}
