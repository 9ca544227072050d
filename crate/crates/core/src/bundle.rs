//! Versioned, checksummed text serialisation of trained classifiers.
//!
//! Layout:
//!
//! ```text
//! rpsgmm-bundle 1
//! sha256 <hex digest of everything after this line>
//! { ...JSON payload... }
//! ```
//!
//! The payload repeats the format version and stores, per class, the label,
//! `tau`, `d`, the component count, weights, means, full covariance
//! matrices and fit metadata. Floats are written in shortest round-trip
//! form, so loading reproduces every parameter bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{ClassModel, ClassifierBundle};
use crate::data::ClassLabel;
use crate::embedding::EmbeddingParams;
use crate::gmm::{FitMeta, GmmModel};
use crate::io::write_atomic_bytes;

pub const FORMAT_NAME: &str = "rpsgmm-bundle";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible bundle format version {found} (supported: {supported})")]
    Incompatible { found: u32, supported: u32 },
    #[error("corrupt bundle: {0}")]
    Integrity(String),
}

#[derive(Serialize, Deserialize)]
struct Payload {
    format_version: u32,
    channels: Vec<String>,
    tau: usize,
    d: usize,
    classes: Vec<ClassRecord>,
}

#[derive(Serialize, Deserialize)]
struct ClassRecord {
    label: ClassLabel,
    representative: String,
    tau: usize,
    d: usize,
    n_components: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
    meta: FitMeta,
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serialises a bundle to its on-disk text.
pub fn encode_bundle(bundle: &ClassifierBundle) -> String {
    let params = bundle.params();
    let dim = bundle.channels().len() * params.dim;
    let payload = Payload {
        format_version: FORMAT_VERSION,
        channels: bundle.channels().to_vec(),
        tau: params.tau,
        d: params.dim,
        classes: bundle
            .classes()
            .iter()
            .map(|c| ClassRecord {
                label: c.label.clone(),
                representative: c.representative.clone(),
                tau: params.tau,
                d: params.dim,
                n_components: c.model.n_components(),
                weights: c.model.weights.clone(),
                means: c.model.means.clone(),
                covariances: c
                    .model
                    .covariances
                    .iter()
                    .map(|cov| cov.chunks(dim).map(|r| r.to_vec()).collect())
                    .collect(),
                meta: c.model.meta.clone(),
            })
            .collect(),
    };
    let mut body = serde_json::to_string_pretty(&payload).expect("bundle payload serialises");
    body.push('\n');
    format!(
        "{FORMAT_NAME} {FORMAT_VERSION}\nsha256 {}\n{body}",
        digest(body.as_bytes())
    )
}

fn split_line(text: &str) -> Option<(&str, &str)> {
    text.split_once('\n')
}

/// Parses bundle text produced by [`encode_bundle`].
pub fn decode_bundle(text: &str) -> Result<ClassifierBundle, BundleError> {
    let corrupt = |m: &str| BundleError::Integrity(m.to_string());
    let (header, rest) = split_line(text).ok_or_else(|| corrupt("missing header"))?;
    let version = header
        .strip_prefix(FORMAT_NAME)
        .and_then(|v| v.strip_prefix(' '))
        .ok_or_else(|| corrupt("not an rpsgmm bundle"))?;
    let version: u32 = version
        .trim()
        .parse()
        .map_err(|_| corrupt("unreadable format version"))?;
    if version != FORMAT_VERSION {
        return Err(BundleError::Incompatible {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let (sum_line, body) = split_line(rest).ok_or_else(|| corrupt("missing checksum"))?;
    let expected = sum_line
        .strip_prefix("sha256 ")
        .ok_or_else(|| corrupt("missing checksum"))?;
    if digest(body.as_bytes()) != expected.trim() {
        return Err(corrupt("checksum mismatch"));
    }
    let payload: Payload =
        serde_json::from_str(body).map_err(|e| BundleError::Integrity(format!("payload: {e}")))?;
    if payload.format_version != version {
        return Err(corrupt("payload version disagrees with header"));
    }
    let params = EmbeddingParams::new(payload.tau, payload.d)
        .map_err(|e| BundleError::Integrity(e.to_string()))?;
    let mut classes = Vec::with_capacity(payload.classes.len());
    for rec in payload.classes {
        if rec.tau != payload.tau || rec.d != payload.d {
            return Err(corrupt("class embedding differs from bundle embedding"));
        }
        if rec.n_components != rec.weights.len() {
            return Err(corrupt("component count disagrees with weights"));
        }
        let model = GmmModel {
            weights: rec.weights,
            means: rec.means,
            covariances: rec.covariances.into_iter().map(|m| m.concat()).collect(),
            meta: rec.meta,
        };
        classes.push(ClassModel {
            label: rec.label,
            representative: rec.representative,
            model,
        });
    }
    ClassifierBundle::new(params, payload.channels, classes)
        .map_err(|e| BundleError::Integrity(e.to_string()))
}

pub fn save_bundle(bundle: &ClassifierBundle, path: &Path) -> Result<(), BundleError> {
    write_atomic_bytes(path, encode_bundle(bundle).as_bytes()).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_bundle(path: &Path) -> Result<ClassifierBundle, BundleError> {
    let bytes = fs::read(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|_| BundleError::Integrity("not UTF-8".into()))?;
    decode_bundle(&text)
}
