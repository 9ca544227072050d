//! Time series classification with Gaussian mixture models fitted over
//! reconstructed phase spaces.
//!
//! A series is delay-embedded into a cloud of state vectors
//! ([`embedding`]), one mixture is fitted per class on a single
//! representative series ([`gmm`], [`classifier`]), and unseen series are
//! assigned to the class whose mixture gives their embedded points the
//! highest total log-likelihood. The embedding delay and dimension are
//! chosen by an exhaustive grid search.
//!
//! The [`preprocess`] module turns raw satellite observations of
//! supraglacial lakes (backscatter and water-pixel counts) into the daily
//! two-channel series the classifier consumes.

pub mod bundle;
pub mod classifier;
pub mod data;
pub mod embedding;
pub mod gmm;
pub mod io;
pub mod metrics;
pub mod preprocess;
pub mod seed;
pub mod synth;

pub use bundle::{load_bundle, save_bundle, BundleError};
pub use classifier::{
    classify, grid_search, sequence_log_likelihood, train, Classification, ClassifierBundle,
    ClassifierError, GridConfig, GridSearchResult,
};
pub use data::{load_dataset, ClassLabel, DataError, Dataset, TimeSeries};
pub use embedding::{embed, EmbeddingError, EmbeddingParams, PhaseSpace};
pub use gmm::{fit_em, FitConfig, GmmError, GmmModel};
pub use metrics::{evaluate, EvalReport};
pub use synth::{generate_synthetic, SyntheticSpec};
