//! Encoding-model toolkit for comparing network features with EEG responses.
//!
//! Data flows from [`data`] (manifests, NPY tensors, montage, labels) through
//! [`preprocess`] and the ridge [`encoder`] to similarity [`metrics`] and
//! [`stats`]. [`analyses`] wires these into complete runs and reports, and
//! [`synth`] produces datasets with known ground truth.

pub mod analyses;
pub mod data;
pub mod encoder;
mod linalg;
pub mod metrics;
pub mod preprocess;
pub mod stats;
pub mod synth;

pub use nalgebra;

pub use analyses::{AnalysisConfig, AnalysisError, LayerSelector};
pub use data::{
    load_dataset, validate_manifest, CategoryLabels, DataError, Dataset, EegEpochs, FeatureTensor, Montage, Region,
    ValidationIssue,
};
pub use encoder::{CvConfig, EncoderError, ScoreMode, Window};
pub use metrics::{MetricsError, Rdm};
pub use preprocess::FitScope;
pub use stats::{NullDistribution, RegressionResult, StatsError};
pub use synth::{StreamRng, SynthSpec};
