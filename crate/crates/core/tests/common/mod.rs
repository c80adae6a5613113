//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use contin_sense::dataio::{Meta, ObservationSet};
use contin_sense::numkit::{standard_normal, DenseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with the given observation probability; every column keeps
/// at least one observed cell.
pub fn random_instance(seed: u64, n: usize, m: usize, p_obs: f64) -> ObservationSet {
    let mut r = rng(seed);
    let mut values = DenseMatrix::zeros(n, m);
    let mut mask = DenseMatrix::zeros(n, m);
    for j in 0..m {
        let forced = r.gen_range(0..n);
        for i in 0..n {
            if i == forced || r.gen::<f64>() < p_obs {
                mask[(i, j)] = 1.0;
                values[(i, j)] = r.gen_range(-2.0..2.0);
            }
        }
    }
    let mut t = 0.0;
    let times = (0..m)
        .map(|_| {
            t += r.gen_range(0.5..3.0);
            t
        })
        .collect();
    ObservationSet::new(values, mask, times, Meta::named("random", n)).unwrap()
}

pub fn rmse_loop(est: &DenseMatrix, truth: &DenseMatrix, eval: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    let mut c = 0usize;
    for i in 0..est.rows() {
        for j in 0..est.cols() {
            if eval[(i, j)] != 0.0 {
                s += (est[(i, j)] - truth[(i, j)]).powi(2);
                c += 1;
            }
        }
    }
    (s / c as f64).sqrt()
}

pub fn abs_sum_loop(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            s += (a[(i, j)] - b[(i, j)]).abs();
        }
    }
    s
}

/// Sorts all observed subareas of the column by distance (ties by index) and
/// averages the first `k`.
pub fn knn_oracle(obs: &ObservationSet, coords: &[[f64; 2]], k: usize) -> DenseMatrix {
    let (n, m) = obs.values.shape();
    let mut out = obs.values.clone();
    for j in 0..m {
        for i in 0..n {
            if obs.mask[(i, j)] != 0.0 {
                continue;
            }
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&a| obs.mask[(a, j)] != 0.0)
                .map(|a| {
                    let dx = coords[i][0] - coords[a][0];
                    let dy = coords[i][1] - coords[a][1];
                    ((dx * dx + dy * dy).sqrt(), a)
                })
                .collect();
            cand.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
            let take = cand.len().min(k);
            out[(i, j)] = cand[..take].iter().map(|&(_, a)| obs.values[(a, j)]).sum::<f64>() / take as f64;
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().partial_cmp(&m[y][c].abs()).unwrap()).unwrap();
        m.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

/// Conditional-Gaussian imputation with pairwise-complete moments and
/// off-diagonal shrinkage `lambda`. Assumes every subarea has two or more
/// observations and the shrunk blocks are positive definite.
pub fn gp_oracle(obs: &ObservationSet, lambda: f64) -> DenseMatrix {
    let (n, m) = obs.values.shape();
    let seen = |i: usize, j: usize| obs.mask[(i, j)] != 0.0;
    let mu: Vec<f64> = (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..m).filter(|&j| seen(i, j)).map(|j| obs.values[(i, j)]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let mut cov = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let both: Vec<usize> = (0..m).filter(|&j| seen(a, j) && seen(b, j)).collect();
            if both.is_empty() {
                continue;
            }
            let c: f64 = both
                .iter()
                .map(|&j| (obs.values[(a, j)] - mu[a]) * (obs.values[(b, j)] - mu[b]))
                .sum::<f64>()
                / both.len() as f64;
            cov[(a, b)] = if a == b { c } else { (1.0 - lambda) * c };
        }
    }
    let mut out = obs.values.clone();
    for j in 0..m {
        let bi: Vec<usize> = (0..n).filter(|&i| seen(i, j)).collect();
        let ai: Vec<usize> = (0..n).filter(|&i| !seen(i, j)).collect();
        if ai.is_empty() {
            continue;
        }
        let sbb = DenseMatrix::from_fn(bi.len(), bi.len(), |p, q| cov[(bi[p], bi[q])]);
        let r: Vec<f64> = bi.iter().map(|&i| obs.values[(i, j)] - mu[i]).collect();
        let w = solve(&sbb, &r);
        for &a in &ai {
            out[(a, j)] = mu[a] + bi.iter().zip(&w).map(|(&b, wb)| cov[(a, b)] * wb).sum::<f64>();
        }
    }
    out
}

/// Bucket-and-average by brute force: unit count, per-cell means and the
/// mask of non-empty cells.
pub fn merge_oracle(obs: &ObservationSet, unit: f64) -> (usize, DenseMatrix, DenseMatrix) {
    let (n, m) = obs.values.shape();
    let t0 = obs.times[0];
    let span = obs.times[m - 1] - t0;
    let units = ((span / unit).ceil() as usize).max(1);
    let mut sum = vec![vec![0.0; units]; n];
    let mut cnt = vec![vec![0usize; units]; n];
    for j in 0..m {
        let mut p = ((obs.times[j] - t0) / unit).floor() as usize;
        if p >= units {
            p = units - 1;
        }
        for i in 0..n {
            if obs.mask[(i, j)] != 0.0 {
                sum[i][p] += obs.values[(i, j)];
                cnt[i][p] += 1;
            }
        }
    }
    let values = DenseMatrix::from_fn(n, units, |i, p| if cnt[i][p] > 0 { sum[i][p] / cnt[i][p] as f64 } else { 0.0 });
    let mask = DenseMatrix::from_fn(n, units, |i, p| if cnt[i][p] > 0 { 1.0 } else { 0.0 });
    (units, values, mask)
}

/// Four correlated Gaussian subareas, mostly observed.
pub fn gaussian_instance(seed: u64) -> ObservationSet {
    let mut r = rng(seed);
    let (n, m) = (4, 60);
    let chol = [[1.0, 0.0, 0.0, 0.0], [0.6, 0.8, 0.0, 0.0], [0.3, -0.2, 0.9, 0.0], [0.1, 0.4, 0.2, 0.8]];
    let mean = [1.0, -0.5, 2.0, 0.0];
    let mut values = DenseMatrix::zeros(n, m);
    let mut mask = DenseMatrix::filled(n, m, 1.0);
    for j in 0..m {
        let e: Vec<f64> = (0..n).map(|_| standard_normal(&mut r)).collect();
        for i in 0..n {
            values[(i, j)] = mean[i] + (0..=i).map(|k| chol[i][k] * e[k]).sum::<f64>();
        }
        if j % 3 == 0 {
            let hide = r.gen_range(0..n);
            mask[(hide, j)] = 0.0;
            values[(hide, j)] = 0.0;
            if j % 6 == 0 {
                let other = (hide + 1 + r.gen_range(0..n - 1)) % n;
                mask[(other, j)] = 0.0;
                values[(other, j)] = 0.0;
            }
        }
    }
    let times = (0..m).map(|j| j as f64).collect();
    ObservationSet::new(values, mask, times, Meta::named("gauss", n)).unwrap()
}
