//! Dense helpers over row-major `Vec<f64>` matrices.

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    /// Factors a symmetric matrix. Returns `None` unless it is positive
    /// definite. Only the lower triangle of `a` is read.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !sum.is_finite() || sum <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Cholesky { l, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `log det A = 2 * sum(log L_ii)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Solves `L z = b` in place.
    #[inline]
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = b[i];
            for (lk, bk) in row.iter().zip(&b[..i]) {
                s -= lk * bk;
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Mahalanobis form `v^T A^{-1} v`, overwriting `v` with `L^{-1} v`.
    #[inline]
    pub fn quad_form_in_place(&self, v: &mut [f64]) -> f64 {
        self.forward_solve(v);
        v.iter().map(|z| z * z).sum()
    }

    pub fn lower(&self) -> &[f64] {
        &self.l
    }
}

/// Column means of a row-major point matrix.
pub fn mean(points: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for row in points.chunks_exact(dim).take(n) {
        for (mi, x) in m.iter_mut().zip(row) {
            *mi += x;
        }
    }
    for mi in &mut m {
        *mi /= n as f64;
    }
    m
}

/// Biased (1/N) sample covariance.
pub fn covariance(points: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let weights = vec![1.0; n];
    let m = mean(points, n, dim);
    weighted_scatter(points, dim, &weights, &m, n as f64)
}

/// `sum_i w_i (x_i - mu)(x_i - mu)^T / norm`, exactly symmetric.
pub fn weighted_scatter(
    points: &[f64],
    dim: usize,
    weights: &[f64],
    mu: &[f64],
    norm: f64,
) -> Vec<f64> {
    let mut s = vec![0.0; dim * dim];
    let mut diff = vec![0.0; dim];
    for (row, &w) in points.chunks_exact(dim).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (d, (x, m)) in diff.iter_mut().zip(row.iter().zip(mu)) {
            *d = x - m;
        }
        for i in 0..dim {
            let wi = w * diff[i];
            let srow = &mut s[i * dim..i * dim + i + 1];
            for (sij, dj) in srow.iter_mut().zip(&diff[..=i]) {
                *sij += wi * dj;
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = s[i * dim + j] / norm;
            s[i * dim + j] = v;
            s[j * dim + i] = v;
        }
    }
    s
}

pub fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

pub fn add_ridge(a: &mut [f64], n: usize, ridge: f64) {
    for i in 0..n {
        a[i * n + i] += ridge;
    }
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    add_ridge(&mut a, n, 1.0);
    a
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
