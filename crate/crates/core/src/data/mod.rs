//! Tensors, metadata and the on-disk interchange format (JSON manifest + NPY).

mod benchmark;
mod labels;
mod manifest;
mod montage;
pub mod npy;
mod types;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{load_benchmark_scores, read_benchmark_scores, BenchmarkScore};
pub use labels::CategoryLabels;
pub use manifest::{
    load_dataset, save_dataset, validate_manifest, Dataset, DatasetParts, FeatureEntry, Manifest, Subject,
    SubjectEntry, MANIFEST_VERSION,
};
pub use montage::{Montage, MontageEntry, Region};
pub use npy::{load_npy, save_npy, Dtype, NpyArray, NpyError};
pub use types::{expected_n_times, EegEpochs, FeatureTensor};

/// One problem found while validating a manifest and the files it references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: String,
    /// Manifest field the issue is attached to, e.g. `subjects[0].eeg_path`.
    pub location: String,
    pub message: String,
}

impl ValidationIssue {
    pub fn new(code: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), location: location.into(), message: message.into() }
    }
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data: {0}")]
    Invariant(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("features of model {model_id} are missing stimulus ids {missing:?}")]
    IdMismatch { model_id: String, missing: Vec<String> },
    #[error("{}: {source}", path.display())]
    Npy { path: PathBuf, source: NpyError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("JSON error: {0}")]
    Json(String),
    #[error("dataset failed validation: {}", join_issues(.0))]
    Invalid(Vec<ValidationIssue>),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
