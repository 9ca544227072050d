//! Maximum-likelihood classification with one mixture per class.
//!
//! Each class is represented by a single training series. Its phase space
//! is fitted by a [`GmmModel`]; an unseen series is embedded with the same
//! `(tau, d)` and assigned to the class whose model gives the embedded
//! points the largest summed log density.

mod grid;

use thiserror::Error;

use crate::data::{ClassLabel, TimeSeries};
use crate::embedding::{embed, EmbeddingError, EmbeddingParams};
use crate::gmm::{fit_em, FitConfig, GmmError, GmmModel, PreparedMixture};
use crate::seed::derive_seed;

pub use grid::{
    grid_search, select_best, CellFit, CellStatus, GridCell, GridConfig, GridSearchResult,
    GridSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("series {series}{}: {source}", class_suffix(.class))]
    TooShort {
        class: Option<ClassLabel>,
        series: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("fitting class {class}: {source}")]
    Fit {
        class: ClassLabel,
        #[source]
        source: GmmError,
    },
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("{0}")]
    Domain(String),
}

fn class_suffix(class: &Option<ClassLabel>) -> String {
    class
        .as_ref()
        .map(|c| format!(" (class {c})"))
        .unwrap_or_default()
}

impl ClassifierError {
    /// True for failures of the numerical fit rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, ClassifierError::Fit { .. } | ClassifierError::Gmm(_))
    }
}

/// One trained class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub label: ClassLabel,
    /// Id of the series the model was fitted on.
    pub representative: String,
    pub model: GmmModel,
}

/// Per-class models sharing one embedding. The order of `classes` is the
/// tie-breaking order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierBundle {
    params: EmbeddingParams,
    channels: Vec<String>,
    classes: Vec<ClassModel>,
}

impl ClassifierBundle {
    pub fn new(
        params: EmbeddingParams,
        channels: Vec<String>,
        classes: Vec<ClassModel>,
    ) -> Result<Self, ClassifierError> {
        if classes.len() < 2 {
            return Err(ClassifierError::Domain(format!(
                "a classifier needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let dim = channels.len() * params.dim;
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].iter().any(|o| o.label == c.label) {
                return Err(ClassifierError::Domain(format!(
                    "duplicate class {}",
                    c.label
                )));
            }
            c.model.validate().map_err(|source| ClassifierError::Fit {
                class: c.label.clone(),
                source,
            })?;
            if c.model.dim() != dim {
                return Err(ClassifierError::Schema(format!(
                    "model for {} has dimension {}, expected {} channels x d={} = {dim}",
                    c.label,
                    c.model.dim(),
                    channels.len(),
                    params.dim
                )));
            }
        }
        Ok(ClassifierBundle {
            params,
            channels,
            classes,
        })
    }

    pub fn params(&self) -> EmbeddingParams {
        self.params
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn class_order(&self) -> Vec<&ClassLabel> {
        self.classes.iter().map(|c| &c.label).collect()
    }

    pub fn model(&self, label: &ClassLabel) -> Option<&GmmModel> {
        self.classes
            .iter()
            .find(|c| &c.label == label)
            .map(|c| &c.model)
    }

    /// Factors every covariance once for repeated classification.
    pub fn prepare(&self) -> Result<PreparedBundle<'_>, ClassifierError> {
        let mixtures = self
            .classes
            .iter()
            .map(|c| {
                c.model.prepare().map_err(|source| ClassifierError::Fit {
                    class: c.label.clone(),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(PreparedBundle {
            bundle: self,
            mixtures,
        })
    }
}

/// Predicted label plus the score of every class, in class order.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: ClassLabel,
    pub scores: Vec<(ClassLabel, f64)>,
}

impl Classification {
    pub fn score(&self, label: &ClassLabel) -> Option<f64> {
        self.scores
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, s)| *s)
    }
}

pub struct PreparedBundle<'a> {
    bundle: &'a ClassifierBundle,
    mixtures: Vec<PreparedMixture>,
}

impl PreparedBundle<'_> {
    pub fn bundle(&self) -> &ClassifierBundle {
        self.bundle
    }

    pub fn classify(&self, series: &TimeSeries) -> Result<Classification, ClassifierError> {
        check_schema(series, &self.bundle.channels)?;
        let points =
            embed(series, self.bundle.params).map_err(|source| ClassifierError::TooShort {
                class: None,
                series: series.id().to_string(),
                source,
            })?;
        let scores: Vec<(ClassLabel, f64)> = self
            .bundle
            .classes
            .iter()
            .zip(&self.mixtures)
            .map(|(c, m)| (c.label.clone(), m.total_log_likelihood(&points)))
            .collect();
        let label = argmax(&scores).clone();
        Ok(Classification { label, scores })
    }

    /// Cumulative log-likelihood after each embedded point, per class.
    pub fn running_log_likelihood(
        &self,
        series: &TimeSeries,
    ) -> Result<Vec<Vec<f64>>, ClassifierError> {
        check_schema(series, &self.bundle.channels)?;
        let points =
            embed(series, self.bundle.params).map_err(|source| ClassifierError::TooShort {
                class: None,
                series: series.id().to_string(),
                source,
            })?;
        Ok(self
            .mixtures
            .iter()
            .map(|m| {
                m.point_log_densities(&points)
                    .into_iter()
                    .scan(0.0, |acc, v| {
                        *acc += v;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect())
    }
}

/// First maximum wins; NaN never wins.
fn argmax(scores: &[(ClassLabel, f64)]) -> &ClassLabel {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (_, s)) in scores.iter().enumerate() {
        if *s > best_score {
            best = i;
            best_score = *s;
        }
    }
    &scores[best].0
}

fn check_schema(series: &TimeSeries, channels: &[String]) -> Result<(), ClassifierError> {
    if series.channels() != channels {
        return Err(ClassifierError::Schema(format!(
            "series {} has channels {:?}, bundle expects {:?}",
            series.id(),
            series.channels(),
            channels
        )));
    }
    Ok(())
}

/// Seed of the fit for class `class_index` at `params`.
pub fn class_seed(base: u64, class_index: usize, params: EmbeddingParams) -> u64 {
    derive_seed(
        base,
        &[class_index as u64, params.tau as u64, params.dim as u64],
    )
}

/// Fits one mixture per class on its representative series.
///
/// Class order follows `representatives`. Each fit gets its own seed derived
/// from `config.seed`, the class index and `(tau, d)`.
pub fn train(
    representatives: &[(ClassLabel, &TimeSeries)],
    params: EmbeddingParams,
    config: &FitConfig,
) -> Result<ClassifierBundle, ClassifierError> {
    let Some((_, first)) = representatives.first() else {
        return Err(ClassifierError::Domain("no representatives".into()));
    };
    let channels = first.channels().to_vec();
    let mut classes = Vec::with_capacity(representatives.len());
    for (i, (label, series)) in representatives.iter().enumerate() {
        check_schema(series, &channels)?;
        let points = embed(series, params).map_err(|source| ClassifierError::TooShort {
            class: Some(label.clone()),
            series: series.id().to_string(),
            source,
        })?;
        let cfg = config.clone().with_seed(class_seed(config.seed, i, params));
        let model = fit_em(&points, &cfg).map_err(|source| ClassifierError::Fit {
            class: label.clone(),
            source,
        })?;
        classes.push(ClassModel {
            label: label.clone(),
            representative: series.id().to_string(),
            model,
        });
    }
    ClassifierBundle::new(params, channels, classes)
}

/// Sum of mixture log densities over the embedded points of `series`.
pub fn sequence_log_likelihood(
    series: &TimeSeries,
    model: &GmmModel,
    params: EmbeddingParams,
) -> Result<f64, ClassifierError> {
    let points = embed(series, params).map_err(|source| ClassifierError::TooShort {
        class: None,
        series: series.id().to_string(),
        source,
    })?;
    let prepared = model.prepare()?;
    if prepared.dim() != points.point_dim() {
        return Err(ClassifierError::Schema(format!(
            "embedded dimension {} does not match model dimension {}",
            points.point_dim(),
            prepared.dim()
        )));
    }
    Ok(prepared.total_log_likelihood(&points))
}

/// Maximum-likelihood label of `series`; ties go to the earlier class.
pub fn classify(
    series: &TimeSeries,
    bundle: &ClassifierBundle,
) -> Result<Classification, ClassifierError> {
    bundle.prepare()?.classify(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::linalg::identity;

    fn series(id: &str, values: Vec<f64>) -> TimeSeries {
        TimeSeries::univariate(id, values).unwrap()
    }

    fn sine(n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (t as f64 * 0.2 + phase).sin() + 0.01 * ((t * 7919) % 13) as f64)
            .collect()
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| t as f64 / n as f64 * 2.0 - 1.0 + 0.01 * ((t * 104_729) % 17) as f64)
            .collect()
    }

    fn small_config() -> FitConfig {
        FitConfig {
            n_components: 3,
            n_init: 3,
            ..FitConfig::default()
        }
    }

    #[test]
    fn sine_versus_ramp_self_consistent() {
        let a = series("sine", sine(120, 0.0));
        let b = series("ramp", ramp(120));
        let reps = [
            (ClassLabel::Other("sine".into()), &a),
            (ClassLabel::Other("ramp".into()), &b),
        ];
        let bundle = train(&reps, EmbeddingParams::new(2, 3).unwrap(), &small_config()).unwrap();
        assert_eq!(
            classify(&a, &bundle).unwrap().label,
            ClassLabel::Other("sine".into())
        );
        assert_eq!(
            classify(&b, &bundle).unwrap().label,
            ClassLabel::Other("ramp".into())
        );
    }

    #[test]
    fn bundle_dimensions_follow_embedding() {
        let mk = |id: &str, f: f64| {
            TimeSeries::from_columns(
                id,
                (0..245).collect(),
                vec!["hv_anom".into(), "p_water".into()],
                &[sine(245, f), ramp(245)],
                None,
            )
            .unwrap()
        };
        let (r, d, b) = (mk("r", 0.0), mk("d", 1.0), mk("b", 2.0));
        let reps = [
            (ClassLabel::Refreeze, &r),
            (ClassLabel::Drain, &d),
            (ClassLabel::Buried, &b),
        ];
        let params = EmbeddingParams::new(2, 5).unwrap();
        let bundle = train(&reps, params, &small_config()).unwrap();
        assert_eq!(bundle.classes().len(), 3);
        for c in bundle.classes() {
            assert_eq!(c.model.dim(), 10);
        }
        assert_eq!(params.n_points(245), Some(237));
    }

    #[test]
    fn short_representative_is_reported() {
        let a = series("a", sine(8, 0.0));
        let b = series("b", ramp(40));
        let reps = [(ClassLabel::Drain, &a), (ClassLabel::Buried, &b)];
        let err = train(&reps, EmbeddingParams::new(4, 3).unwrap(), &small_config()).unwrap_err();
        match err {
            ClassifierError::TooShort { class, source, .. } => {
                assert_eq!(class, Some(ClassLabel::Drain));
                assert_eq!(
                    source,
                    EmbeddingError::SeriesTooShort {
                        len: 8,
                        required: 9
                    }
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn unit_model(mean: f64) -> GmmModel {
        GmmModel::new(vec![1.0], vec![vec![mean]], vec![identity(1)]).unwrap()
    }

    #[test]
    fn identical_models_tie_to_first_class() {
        let params = EmbeddingParams::new(1, 1).unwrap();
        let bundle = ClassifierBundle::new(
            params,
            vec!["x".into()],
            vec![
                ClassModel {
                    label: ClassLabel::Buried,
                    representative: "a".into(),
                    model: unit_model(0.0),
                },
                ClassModel {
                    label: ClassLabel::Refreeze,
                    representative: "b".into(),
                    model: unit_model(0.0),
                },
            ],
        )
        .unwrap();
        let s = series("s", vec![0.3, -0.2, 1.0]);
        assert_eq!(classify(&s, &bundle).unwrap().label, ClassLabel::Buried);
    }

    #[test]
    fn mean_shift_lowers_likelihood() {
        let s = series("s", sine(100, 0.3));
        let params = EmbeddingParams::new(1, 1).unwrap();
        let vals = s.column(0);
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        let fitted = GmmModel::new(vec![1.0], vec![vec![m]], vec![vec![v]]).unwrap();
        let shifted =
            GmmModel::new(vec![1.0], vec![vec![m + 10.0 * v.sqrt()]], vec![vec![v]]).unwrap();
        let a = sequence_log_likelihood(&s, &fitted, params).unwrap();
        let b = sequence_log_likelihood(&s, &shifted, params).unwrap();
        assert!(a > b);
    }

    #[test]
    fn single_point_likelihood_is_point_density() {
        let s = series("s", vec![0.5, 1.5, -0.5]);
        let params = EmbeddingParams::new(1, 3).unwrap();
        let cov = vec![2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 1.5];
        let model = GmmModel::new(vec![1.0], vec![vec![0.0, 0.0, 0.0]], vec![cov]).unwrap();
        let ll = sequence_log_likelihood(&s, &model, params).unwrap();
        let direct = crate::gmm::log_mixture_density(&[-0.5, 1.5, 0.5], &model).unwrap();
        assert!((ll - direct).abs() < 1e-14);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let params = EmbeddingParams::new(1, 1).unwrap();
        let bundle = ClassifierBundle::new(
            params,
            vec!["hv_anom".into()],
            vec![
                ClassModel {
                    label: ClassLabel::Buried,
                    representative: "a".into(),
                    model: unit_model(0.0),
                },
                ClassModel {
                    label: ClassLabel::Drain,
                    representative: "b".into(),
                    model: unit_model(1.0),
                },
            ],
        )
        .unwrap();
        let s = series("s", vec![0.3, -0.2, 1.0]);
        assert!(matches!(
            classify(&s, &bundle),
            Err(ClassifierError::Schema(_))
        ));
    }

    #[test]
    fn single_class_bundle_rejected() {
        let params = EmbeddingParams::new(1, 1).unwrap();
        let r = ClassifierBundle::new(
            params,
            vec!["x".into()],
            vec![ClassModel {
                label: ClassLabel::Buried,
                representative: "a".into(),
                model: unit_model(0.0),
            }],
        );
        assert!(r.is_err());
    }
}
