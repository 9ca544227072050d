use std::f64::consts::PI;

use super::linalg::Cholesky;
use super::{GmmError, GmmModel};
use crate::embedding::PhaseSpace;

/// `log(sum(exp(v)))`, shifted by the maximum.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn log_normaliser(dim: usize, chol: &Cholesky) -> f64 {
    -0.5 * (dim as f64 * (2.0 * PI).ln() + chol.log_det())
}

/// Log of the multivariate normal density at `x`.
pub fn log_component_density(x: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64, GmmError> {
    let dim = x.len();
    if mu.len() != dim || sigma.len() != dim * dim {
        return Err(GmmError::DimensionMismatch(format!(
            "point {dim}, mean {}, covariance {}",
            mu.len(),
            sigma.len()
        )));
    }
    let chol =
        Cholesky::factor(sigma, dim).ok_or(GmmError::NotPositiveDefinite { component: 0 })?;
    let mut diff: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let q = chol.quad_form_in_place(&mut diff);
    Ok(log_normaliser(dim, &chol) - 0.5 * q)
}

/// Log of the mixture density at `x`.
pub fn log_mixture_density(x: &[f64], model: &GmmModel) -> Result<f64, GmmError> {
    let prepared = PreparedMixture::new(model)?;
    if x.len() != prepared.dim {
        return Err(GmmError::DimensionMismatch(format!(
            "point {}, model {}",
            x.len(),
            prepared.dim
        )));
    }
    Ok(prepared.log_density(x))
}

#[derive(Clone, Debug)]
struct PreparedComponent {
    mean: Vec<f64>,
    chol: Cholesky,
    // log w + log normaliser
    log_scale: f64,
}

/// A mixture with every covariance factored once, ready for repeated
/// evaluation.
#[derive(Clone, Debug)]
pub struct PreparedMixture {
    comps: Vec<PreparedComponent>,
    dim: usize,
}

impl PreparedMixture {
    pub fn new(model: &GmmModel) -> Result<Self, GmmError> {
        let dim = model.dim();
        let comps = model
            .weights
            .iter()
            .zip(&model.means)
            .zip(&model.covariances)
            .enumerate()
            .map(|(i, ((w, mu), cov))| {
                if mu.len() != dim || cov.len() != dim * dim {
                    return Err(GmmError::DimensionMismatch(format!("component {i}")));
                }
                let chol = Cholesky::factor(cov, dim)
                    .ok_or(GmmError::NotPositiveDefinite { component: i })?;
                Ok(PreparedComponent {
                    mean: mu.clone(),
                    log_scale: w.ln() + log_normaliser(dim, &chol),
                    chol,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(PreparedMixture { comps, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    /// Fills `terms[j] = log w_j + log N(x | mu_j, Sigma_j)`.
    pub(crate) fn weighted_log_terms(&self, x: &[f64], diff: &mut [f64], terms: &mut [f64]) {
        for (c, t) in self.comps.iter().zip(terms.iter_mut()) {
            for (d, (a, b)) in diff.iter_mut().zip(x.iter().zip(&c.mean)) {
                *d = a - b;
            }
            *t = c.log_scale - 0.5 * c.chol.quad_form_in_place(diff);
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut diff = vec![0.0; self.dim];
        let mut terms = vec![0.0; self.comps.len()];
        self.weighted_log_terms(x, &mut diff, &mut terms);
        log_sum_exp(&terms)
    }

    /// Log density of every point.
    pub fn point_log_densities(&self, points: &PhaseSpace) -> Vec<f64> {
        let mut diff = vec![0.0; self.dim];
        let mut terms = vec![0.0; self.comps.len()];
        points
            .rows()
            .map(|x| {
                self.weighted_log_terms(x, &mut diff, &mut terms);
                log_sum_exp(&terms)
            })
            .collect()
    }

    /// Sum of point log densities: the log of the product likelihood.
    pub fn total_log_likelihood(&self, points: &PhaseSpace) -> f64 {
        self.point_log_densities(points).iter().sum()
    }
}
