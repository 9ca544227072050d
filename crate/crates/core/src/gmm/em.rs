use super::density::{log_sum_exp, PreparedMixture};
use super::kmeans::kmeans;
use super::linalg::{add_ridge, covariance, trace, weighted_scatter};
use super::{FitConfig, FitMeta, GmmError, GmmModel, DEGENERATE_MASS, MAX_RESETS};
use crate::embedding::PhaseSpace;

/// Posterior component probabilities, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    gamma: Vec<f64>,
    n_points: usize,
    n_components: usize,
    point_log_density: Vec<f64>,
}

impl Responsibilities {
    /// Wraps an explicit responsibility matrix (no likelihood attached).
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_components = rows.first().map_or(0, |r| r.len());
        assert!(
            rows.iter().all(|r| r.len() == n_components),
            "ragged responsibilities"
        );
        Responsibilities {
            gamma: rows.concat(),
            n_points: rows.len(),
            n_components,
            point_log_density: Vec::new(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.n_components..(i + 1) * self.n_components]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.n_components + j]
    }

    /// Mixture log density of each point under the model that produced
    /// these responsibilities. Empty for [`Responsibilities::from_rows`].
    pub fn point_log_densities(&self) -> &[f64] {
        &self.point_log_density
    }

    pub fn log_likelihood(&self) -> f64 {
        self.point_log_density.iter().sum()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_points).map(|i| self.get(i, j)).collect()
    }
}

/// E-step: responsibilities computed in log space and normalised per row.
pub fn e_step(points: &PhaseSpace, model: &GmmModel) -> Result<Responsibilities, GmmError> {
    let prepared = PreparedMixture::new(model)?;
    if prepared.dim() != points.point_dim() {
        return Err(GmmError::DimensionMismatch(format!(
            "points have dimension {}, model {}",
            points.point_dim(),
            prepared.dim()
        )));
    }
    Ok(e_step_prepared(points, &prepared))
}

fn e_step_prepared(points: &PhaseSpace, prepared: &PreparedMixture) -> Responsibilities {
    let k = prepared.n_components();
    let n = points.n_points();
    let mut gamma = vec![0.0; n * k];
    let mut point_log_density = Vec::with_capacity(n);
    let mut diff = vec![0.0; points.point_dim()];
    for (i, x) in points.rows().enumerate() {
        let row = &mut gamma[i * k..(i + 1) * k];
        prepared.weighted_log_terms(x, &mut diff, row);
        let lse = log_sum_exp(row);
        for g in row.iter_mut() {
            *g = (*g - lse).exp();
        }
        // exp of shifted logs can miss 1 by a few ulps; renormalise
        let s: f64 = row.iter().sum();
        for g in row.iter_mut() {
            *g /= s;
        }
        point_log_density.push(lse);
    }
    Responsibilities {
        gamma,
        n_points: n,
        n_components: k,
        point_log_density,
    }
}

struct MStep {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
    degenerate: Vec<usize>,
}

fn m_step_partial(points: &PhaseSpace, gamma: &Responsibilities, ridge: f64) -> MStep {
    let n = points.n_points();
    let dim = points.point_dim();
    let k = gamma.n_components();
    let flat = points.as_flat();
    let mut mass = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    let mut degenerate = Vec::new();
    for j in 0..k {
        let w = gamma.column(j);
        let nk: f64 = w.iter().sum();
        mass.push(nk);
        if nk.is_nan() || nk < DEGENERATE_MASS {
            degenerate.push(j);
            means.push(vec![0.0; dim]);
            covariances.push(super::linalg::identity(dim));
            continue;
        }
        let mut mu = vec![0.0; dim];
        for (row, g) in flat.chunks_exact(dim).zip(&w) {
            for (m, x) in mu.iter_mut().zip(row) {
                *m += g * x;
            }
        }
        for m in &mut mu {
            *m /= nk;
        }
        let mut cov = weighted_scatter(flat, dim, &w, &mu, nk);
        add_ridge(&mut cov, dim, ridge);
        means.push(mu);
        covariances.push(cov);
    }
    // rows of gamma sum to one, so the total mass is n up to rounding
    let total: f64 = mass.iter().sum();
    let weights = mass.iter().map(|m| m / total).collect();
    debug_assert!((total - n as f64).abs() <= 1e-6 * n as f64 + 1e-9);
    MStep {
        weights,
        means,
        covariances,
        degenerate,
    }
}

/// M-step: weights, means and responsibility-weighted (biased)
/// covariances, with `ridge` added to every covariance diagonal.
pub fn m_step(
    points: &PhaseSpace,
    gamma: &Responsibilities,
    ridge: f64,
) -> Result<GmmModel, GmmError> {
    if gamma.n_points() != points.n_points() {
        return Err(GmmError::DimensionMismatch(format!(
            "{} responsibility rows for {} points",
            gamma.n_points(),
            points.n_points()
        )));
    }
    let step = m_step_partial(points, gamma, ridge);
    if !step.degenerate.is_empty() {
        return Err(GmmError::DegenerateComponents {
            components: step.degenerate,
        });
    }
    GmmModel::new(step.weights, step.means, step.covariances)
}

/// Per-iteration record of a fit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    /// Total log-likelihood of the parameters entering each E-step; the
    /// first entry belongs to the k-means initialisation, the last to the
    /// returned model.
    pub log_likelihoods: Vec<f64>,
    /// Indices into `log_likelihoods` whose value follows a component reset
    /// (the step into them is not an EM step).
    pub reset_points: Vec<usize>,
    pub kmeans_inertia: f64,
}

impl FitTrace {
    /// Largest violation of `LL(t+1) >= LL(t) - slack * |LL(t)|` over plain
    /// EM steps, or `None` when every step complies.
    pub fn monotonicity_violation(&self, slack: f64) -> Option<(usize, f64)> {
        self.log_likelihoods
            .windows(2)
            .enumerate()
            .filter(|(t, _)| !self.reset_points.contains(&(t + 1)))
            .filter_map(|(t, w)| {
                let drop = w[0] - w[1];
                (drop > slack * w[0].abs()).then_some((t + 1, drop))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Fits a mixture by EM. See [`fit_em_traced`].
pub fn fit_em(points: &PhaseSpace, config: &FitConfig) -> Result<GmmModel, GmmError> {
    fit_em_traced(points, config).map(|(m, _)| m)
}

/// Fits a mixture by EM and returns the likelihood trace.
///
/// Means start at the best of `n_init` k-means++ runs, weights uniform and
/// every covariance at the global sample covariance plus ridge. Iteration
/// stops once the relative log-likelihood gain falls below `tol` or after
/// `max_iter` M-steps. A component whose total responsibility drops under
/// [`DEGENERATE_MASS`] is moved onto the point the current mixture explains
/// worst; after [`MAX_RESETS`] such resets the fit fails.
pub fn fit_em_traced(
    points: &PhaseSpace,
    config: &FitConfig,
) -> Result<(GmmModel, FitTrace), GmmError> {
    config.validate()?;
    let n = points.n_points();
    let dim = points.point_dim();
    let k = config.n_components;
    if dim == 0 {
        return Err(GmmError::DimensionMismatch(
            "zero-dimensional points".into(),
        ));
    }
    if n < k {
        return Err(GmmError::InsufficientPoints {
            points: n,
            required: k,
        });
    }

    let global_cov = covariance(points.as_flat(), n, dim);
    let mut ridge = config.reg * trace(&global_cov, dim) / dim as f64;
    if ridge.is_nan() || ridge <= 0.0 {
        // constant data: fall back to an absolute ridge
        ridge = config.reg;
    }
    let mut base_cov = global_cov;
    add_ridge(&mut base_cov, dim, ridge);

    let km = kmeans(points, k, config.n_init, config.seed)?;
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: km.centroids,
        covariances: vec![base_cov.clone(); k],
        meta: FitMeta::default(),
    };
    let mut prepared = PreparedMixture::new(&model)?;
    let mut trace = FitTrace {
        kmeans_inertia: km.inertia,
        ..FitTrace::default()
    };
    let mut iterations = 0;
    let mut resets = 0;
    let mut converged = false;

    loop {
        let resp = e_step_prepared(points, &prepared);
        let ll = resp.log_likelihood();
        trace.log_likelihoods.push(ll);
        if let [.., prev, _] = trace.log_likelihoods[..] {
            if ll - prev <= config.tol * prev.abs()
                && !trace
                    .reset_points
                    .contains(&(trace.log_likelihoods.len() - 1))
            {
                converged = true;
                break;
            }
        }
        if iterations == config.max_iter {
            break;
        }
        let step = m_step_partial(points, &resp, ridge);
        iterations += 1;
        let mut weights = step.weights;
        let mut means = step.means;
        let mut covariances = step.covariances;
        if !step.degenerate.is_empty() {
            resets += step.degenerate.len();
            if resets > MAX_RESETS {
                return Err(GmmError::DegenerateFit { resets: MAX_RESETS });
            }
            let mut worst: Vec<usize> = (0..n).collect();
            worst.sort_by(|&a, &b| {
                resp.point_log_densities()[a]
                    .total_cmp(&resp.point_log_densities()[b])
                    .then(a.cmp(&b))
            });
            for (slot, &j) in step.degenerate.iter().enumerate() {
                means[j] = points.point(worst[slot % n]).to_vec();
                covariances[j] = base_cov.clone();
                weights[j] = 1.0 / k as f64;
            }
            let s: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= s;
            }
            trace.reset_points.push(trace.log_likelihoods.len());
        }
        model = GmmModel {
            weights,
            means,
            covariances,
            meta: FitMeta::default(),
        };
        prepared = PreparedMixture::new(&model)?;
    }

    model.meta = FitMeta {
        initial_log_likelihood: trace.log_likelihoods[0],
        final_log_likelihood: *trace.log_likelihoods.last().expect("at least one E-step"),
        iterations,
        converged,
        seed: config.seed,
        ridge,
        resets,
    };
    Ok((model, trace))
}
