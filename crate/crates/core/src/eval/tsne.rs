//! Exact O(n²) t-SNE.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub dims: usize,
    pub iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            dims: 2,
            iters: 1000,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

const ENTROPY_TOL: f64 = 1e-4;
const EXAGGERATION: f64 = 4.0;
const EXAGGERATION_ITERS: usize = 100;
const MOMENTUM_SWITCH: usize = 250;
const MIN_JOINT: f64 = 1e-12;

fn squared_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .par_iter()
        .map(|a| {
            points
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
                .collect()
        })
        .collect()
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    if points.len() < 5 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let d = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: d,
        });
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::Degenerate);
    }
    Ok(())
}

/// One row of `p_{j|i}` with Gaussian precision found by bisection so the
/// row entropy matches `ln(perplexity)`. When the target is out of reach the
/// search saturates at the closest precision it can find.
fn affinity_row(dist: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let floor = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let row_at = |beta: f64| -> (Vec<f64>, f64) {
        let mut p: Vec<f64> = dist
            .iter()
            .enumerate()
            .map(|(j, &d)| if j == i { 0.0 } else { (-(d - floor) * beta).exp() })
            .collect();
        let sum: f64 = p.iter().sum();
        let mut entropy = 0.0;
        for (j, v) in p.iter_mut().enumerate() {
            *v /= sum;
            if j != i && *v > 0.0 {
                entropy -= *v * v.ln();
            }
        }
        (p, entropy)
    };
    let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
    let (mut row, mut entropy) = row_at(beta);
    for _ in 0..200 {
        let diff = entropy - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        (row, entropy) = row_at(beta);
    }
    row
}

/// Row-stochastic conditional affinities `p_{j|i}`.
pub fn conditional_affinities(points: &[Vec<f64>], perplexity: f64) -> Result<Vec<Vec<f64>>> {
    check_points(points)?;
    let dist = squared_distances(points);
    Ok(dist
        .par_iter()
        .enumerate()
        .map(|(i, row)| affinity_row(row, i, perplexity))
        .collect())
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_affinities(conditional: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = conditional.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (conditional[i][j] + conditional[j][i]) / (2.0 * n as f64))
                .collect()
        })
        .collect()
}

pub fn tsne(points: &[Vec<f64>], cfg: &TsneConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.dims == 0 || !(cfg.perplexity > 0.0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::BadConfig("t-SNE needs dims ≥ 1 and positive perplexity and learning rate".into()));
    }
    let p: Vec<Vec<f64>> = joint_affinities(&conditional_affinities(points, cfg.perplexity)?)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v.max(MIN_JOINT)).collect())
        .collect();
    let n = points.len();
    let dims = cfg.dims;
    let mut rng = rng_for(cfg.seed, "tsne", n as u64);
    let normal = Normal::new(0.0, 1e-2).expect("valid sd");
    let mut y: Vec<f64> = (0..n * dims).map(|_| normal.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; n * dims];
    let mut kernel = vec![0.0; n * n];
    let mut grad = vec![0.0; n * dims];

    for iter in 0..cfg.iters {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    kernel[i * n + j] = 0.0;
                    continue;
                }
                let d2: f64 = (0..dims).map(|k| (y[i * dims + k] - y[j * dims + k]).powi(2)).sum();
                let q = 1.0 / (1.0 + d2);
                kernel[i * n + j] = q;
                z += q;
            }
        }
        grad.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = kernel[i * n + j];
                let coeff = 4.0 * (exaggeration * p[i][j] - w / z) * w;
                for k in 0..dims {
                    grad[i * dims + k] += coeff * (y[i * dims + k] - y[j * dims + k]);
                }
            }
        }
        for ((yv, v), g) in y.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = momentum * *v - cfg.learning_rate * g;
            *yv += *v;
        }
        let mut mean = vec![0.0; dims];
        for i in 0..n {
            for k in 0..dims {
                mean[k] += y[i * dims + k] / n as f64;
            }
        }
        for i in 0..n {
            for k in 0..dims {
                y[i * dims + k] -= mean[k];
            }
        }
    }
    Ok(y.chunks_exact(dims).map(<[f64]>::to_vec).collect())
}

/// Fraction of each point's `k` nearest neighbours that share its label.
pub fn knn_purity<L: PartialEq>(points: &[Vec<f64>], labels: &[L], k: usize) -> f64 {
    let dist = squared_distances(points);
    let n = points.len();
    let mut agree = 0usize;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
        agree += order.iter().take(k).filter(|&&j| labels[j] == labels[i]).count();
    }
    agree as f64 / (n * k.min(n - 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn equidistant_points_have_uniform_affinities() {
        let p = conditional_affinities(&simplex(8), 3.0).unwrap();
        for (i, row) in p.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (j, &v) in row.iter().enumerate() {
                let expected = if i == j { 0.0 } else { 1.0 / 7.0 };
                assert!((v - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bisection_hits_target_entropy() {
        let points: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sqrt(), (i % 7) as f64]).collect();
        let p = conditional_affinities(&points, 10.0).unwrap();
        for row in &p {
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
            assert!((h - 10f64.ln()).abs() < 1e-4);
        }
        let joint = joint_affinities(&p);
        for (i, row) in joint.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, joint[j][i]);
            }
        }
    }

    #[test]
    fn unreachable_perplexity_saturates() {
        let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let p = conditional_affinities(&points, 30.0).unwrap();
        assert!(p.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(tsne(&simplex(4), &TsneConfig::default()), Err(Error::TooFewPoints(4))));
        let same = vec![vec![1.0, 2.0]; 6];
        assert!(matches!(tsne(&same, &TsneConfig::default()), Err(Error::Degenerate)));
    }
}
