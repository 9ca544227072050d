//! Gaussian mixture models fitted by k-means-initialised EM.
//!
//! All density work happens in log space. Component densities go through a
//! Cholesky factor of the covariance and mixtures are combined with a
//! max-shifted log-sum-exp, so long products of small densities never
//! underflow.

mod density;
mod em;
mod kmeans;
pub mod linalg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use density::{log_component_density, log_mixture_density, log_sum_exp, PreparedMixture};
pub use em::{e_step, fit_em, fit_em_traced, m_step, FitTrace, Responsibilities};
pub use kmeans::{kmeans, KMeansResult};

/// Below this total responsibility a component is considered empty.
pub const DEGENERATE_MASS: f64 = 1e-10;

/// Resets allowed per fit before giving up.
pub const MAX_RESETS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance of component {component} is not positive definite")]
    NotPositiveDefinite { component: usize },
    #[error("{points} points cannot support {required} clusters/components")]
    InsufficientPoints { points: usize, required: usize },
    #[error("components {components:?} received (almost) no responsibility")]
    DegenerateComponents { components: Vec<usize> },
    #[error("fit still degenerate after {resets} component resets")]
    DegenerateFit { resets: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
}

/// EM settings. Defaults: 10 components, 10 k-means restarts, 200
/// iterations, relative tolerance 1e-6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_components: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tol: f64,
    /// Relative ridge: `reg * trace(global covariance) / dim` is added to
    /// every covariance diagonal.
    pub reg: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_components: 10,
            n_init: 10,
            max_iter: 200,
            tol: 1e-6,
            reg: 1e-6,
            seed: 42,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), GmmError> {
        if self.n_components == 0 {
            return Err(GmmError::InvalidConfig("n_components must be >= 1".into()));
        }
        if self.n_init == 0 {
            return Err(GmmError::InvalidConfig("n_init must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(GmmError::InvalidConfig("tol must be > 0".into()));
        }
        if !self.reg.is_finite() || self.reg < 0.0 {
            return Err(GmmError::InvalidConfig("reg must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Absolute ridge added to the covariance diagonals.
    pub ridge: f64,
    pub resets: usize,
}

/// Mixture parameters. Covariances are row-major `dim x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
    pub meta: FitMeta,
}

impl GmmModel {
    /// Builds and validates a model.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<f64>>,
    ) -> Result<Self, GmmError> {
        let m = GmmModel {
            weights,
            means,
            covariances,
            meta: FitMeta::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// Checks shapes, the weight simplex, symmetry and positive
    /// definiteness.
    pub fn validate(&self) -> Result<(), GmmError> {
        let k = self.weights.len();
        if k == 0 {
            return Err(GmmError::InvalidModel("no components".into()));
        }
        if self.means.len() != k || self.covariances.len() != k {
            return Err(GmmError::InvalidModel(format!(
                "{k} weights, {} means, {} covariances",
                self.means.len(),
                self.covariances.len()
            )));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(GmmError::InvalidModel("zero-dimensional means".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GmmError::InvalidModel(
                "negative or non-finite weight".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(GmmError::InvalidModel(format!("weights sum to {total}")));
        }
        for (i, (mu, cov)) in self.means.iter().zip(&self.covariances).enumerate() {
            if mu.len() != dim || cov.len() != dim * dim {
                return Err(GmmError::InvalidModel(format!(
                    "component {i} has wrong shape"
                )));
            }
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(GmmError::InvalidModel(format!(
                    "component {i} mean not finite"
                )));
            }
            for r in 0..dim {
                for c in 0..r {
                    let (a, b) = (cov[r * dim + c], cov[c * dim + r]);
                    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                        return Err(GmmError::InvalidModel(format!(
                            "covariance {i} not symmetric"
                        )));
                    }
                }
            }
            if linalg::Cholesky::factor(cov, dim).is_none() {
                return Err(GmmError::NotPositiveDefinite { component: i });
            }
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedMixture, GmmError> {
        PreparedMixture::new(self)
    }
}
