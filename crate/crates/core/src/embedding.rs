//! Time-delay embedding into a reconstructed phase space.
//!
//! For a delay `tau` and dimension `d`, sample `n` of a channel becomes the
//! delay vector `[x_n, x_{n-tau}, ..., x_{n-(d-1)tau}]`, most recent sample
//! first. Multivariate series use the same `(tau, d)` for every channel and
//! concatenate the per-channel delay vectors in schema order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TimeSeries;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbeddingError {
    #[error("series of length {len} is too short to embed; need at least {required} samples")]
    SeriesTooShort { len: usize, required: usize },
    #[error("invalid embedding parameters: tau={tau}, d={dim} (both must be >= 1)")]
    InvalidParams { tau: usize, dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub tau: usize,
    #[serde(rename = "d")]
    pub dim: usize,
}

impl EmbeddingParams {
    pub fn new(tau: usize, dim: usize) -> Result<Self, EmbeddingError> {
        if tau == 0 || dim == 0 {
            return Err(EmbeddingError::InvalidParams { tau, dim });
        }
        Ok(EmbeddingParams { tau, dim })
    }

    /// `(d - 1) * tau`: how far back the oldest coordinate reaches.
    pub fn span(&self) -> usize {
        (self.dim - 1) * self.tau
    }

    /// Shortest embeddable series.
    pub fn min_len(&self) -> usize {
        self.span() + 1
    }

    /// Number of delay vectors for a series of length `len`, if any.
    pub fn n_points(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.span()).filter(|&n| n >= 1)
    }

    pub fn fits(&self, len: usize) -> bool {
        self.n_points(len).is_some()
    }
}

/// Row-major matrix of embedded state vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpace {
    points: Vec<f64>,
    n_points: usize,
    point_dim: usize,
    source_len: usize,
}

impl PhaseSpace {
    /// Wraps arbitrary points, e.g. for fitting a mixture to non-embedded
    /// data. `source_len` is set to the point count.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let point_dim = rows.first().map_or(0, |r| r.len());
        assert!(
            rows.iter().all(|r| r.len() == point_dim),
            "ragged rows in PhaseSpace::from_rows"
        );
        PhaseSpace {
            points: rows.concat(),
            n_points: rows.len(),
            point_dim,
            source_len: rows.len(),
        }
    }

    pub fn from_flat(points: Vec<f64>, point_dim: usize) -> Self {
        assert!(point_dim > 0 && points.len().is_multiple_of(point_dim));
        let n_points = points.len() / point_dim;
        PhaseSpace {
            points,
            n_points,
            point_dim,
            source_len: n_points,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn point_dim(&self) -> usize {
        self.point_dim
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.point_dim..(i + 1) * self.point_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.point_dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }
}

/// Embeds every channel of `series` with the same delay and dimension.
pub fn embed(series: &TimeSeries, params: EmbeddingParams) -> Result<PhaseSpace, EmbeddingError> {
    let n = series.len();
    let rows = params.n_points(n).ok_or(EmbeddingError::SeriesTooShort {
        len: n,
        required: params.min_len(),
    })?;
    let c = series.n_channels();
    let point_dim = c * params.dim;
    let start = params.span();
    let mut points = Vec::with_capacity(rows * point_dim);
    for t in start..n {
        for ch in 0..c {
            for j in 0..params.dim {
                points.push(series.value(t - j * params.tau, ch));
            }
        }
    }
    Ok(PhaseSpace {
        points,
        n_points: rows,
        point_dim,
        source_len: n,
    })
}

/// Univariate convenience over a plain slice.
pub fn embed_slice(values: &[f64], params: EmbeddingParams) -> Result<PhaseSpace, EmbeddingError> {
    let n = values.len();
    let rows = params.n_points(n).ok_or(EmbeddingError::SeriesTooShort {
        len: n,
        required: params.min_len(),
    })?;
    let mut points = Vec::with_capacity(rows * params.dim);
    for t in params.span()..n {
        points.extend((0..params.dim).map(|j| values[t - j * params.tau]));
    }
    Ok(PhaseSpace {
        points,
        n_points: rows,
        point_dim: params.dim,
        source_len: n,
    })
}
