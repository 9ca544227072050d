//! Naive reference implementations used as oracles.
//!
//! These follow the textbook formulas directly: explicit matrix inverse and
//! determinant (LU via nalgebra), plain exponentials and ratios, index
//! arithmetic for the delay vectors. They share no code with the crate.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        return 0.0;
    }
    (got - want).abs() / want.abs().max(got.abs())
}

/// ln N(x | mu, sigma) with sigma given row-major.
pub fn log_normal(x: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    let k = x.len();
    let s = DMatrix::from_row_slice(k, k, sigma);
    let inv = s.clone().try_inverse().expect("invertible covariance");
    let det = s.determinant();
    let d = DVector::from_iterator(k, x.iter().zip(mu).map(|(a, b)| a - b));
    let q = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + q)
}

/// ln sum_j w_j N(x | mu_j, sigma_j) without any log-space tricks.
pub fn log_mixture(x: &[f64], weights: &[f64], means: &[Vec<f64>], covs: &[Vec<f64>]) -> f64 {
    let mut p = 0.0;
    for j in 0..weights.len() {
        p += weights[j] * log_normal(x, &means[j], &covs[j]).exp();
    }
    p.ln()
}

pub fn responsibilities(
    points: &[Vec<f64>],
    weights: &[f64],
    means: &[Vec<f64>],
    covs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|x| {
            let num: Vec<f64> = (0..weights.len())
                .map(|j| weights[j] * log_normal(x, &means[j], &covs[j]).exp())
                .collect();
            let den: f64 = num.iter().sum();
            num.iter().map(|v| v / den).collect()
        })
        .collect()
}

/// Weights, means and biased covariances (+ ridge on the diagonal).
pub fn m_step(
    points: &[Vec<f64>],
    gamma: &[Vec<f64>],
    ridge: f64,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = points.len();
    let dim = points[0].len();
    let k = gamma[0].len();
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut covs = Vec::new();
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| gamma[i][j]).sum();
        let mut mu = DVector::zeros(dim);
        for i in 0..n {
            mu += DVector::from_column_slice(&points[i]) * gamma[i][j];
        }
        mu /= nk;
        let mut s = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let d = DVector::from_column_slice(&points[i]) - &mu;
            s += &d * d.transpose() * gamma[i][j];
        }
        s /= nk;
        for a in 0..dim {
            s[(a, a)] += ridge;
        }
        weights.push(nk / n as f64);
        means.push(mu.iter().copied().collect());
        covs.push(s.transpose().iter().copied().collect());
    }
    (weights, means, covs)
}

/// Delay vectors of channel-major columns: point i holds, per channel,
/// `x[t], x[t - tau], ..., x[t - (d-1) tau]` with `t = i + (d-1) tau`.
pub fn embed(columns: &[Vec<f64>], tau: usize, d: usize) -> Vec<Vec<f64>> {
    let n = columns[0].len();
    let span = (d - 1) * tau;
    (span..n)
        .map(|t| {
            let mut p = Vec::new();
            for col in columns {
                for k in 0..d {
                    p.push(col[t - k * tau]);
                }
            }
            p
        })
        .collect()
}

/// Random symmetric positive definite matrix, row-major, with eigenvalues
/// roughly in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    // Q diag(l) Q^T with Q from a QR of a Gaussian matrix
    let g = DMatrix::from_fn(dim, dim, |_, _| normal(rng));
    let q = g.qr().q();
    let l = DMatrix::from_diagonal(&DVector::from_fn(dim, |_, _| rng.random_range(lo..hi)));
    let s = &q * l * q.transpose();
    let s = (&s + s.transpose()) * 0.5;
    s.transpose().iter().copied().collect()
}

/// Random responsibilities whose rows sum to one.
pub fn random_gamma(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}
