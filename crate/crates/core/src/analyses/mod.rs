//! End-to-end analyses over a loaded dataset: the alignment battery,
//! layer × time grids, scalp topographies, category splits, benchmark
//! regressions, RDM export, and report serialization.

mod alignment;
mod benchmark;
mod category;
mod export;
mod layer_time;
mod topo;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, EegEpochs, FeatureTensor, Subject};
use crate::encoder::{CvConfig, EncoderError, DEFAULT_PCA_DIM};
use crate::metrics::MetricsError;
use crate::preprocess::{self, PreprocessError};
use crate::stats::StatsError;

pub use alignment::{run_alignment, run_rdm, AlignmentReport, MetricSet, RdmResult, SubjectAlignment, SubjectRdm};
pub use benchmark::{run_benchmark_corr, BandSample, BenchmarkResult, TaskRegression};
pub use category::{run_category, CategoryMode, CategoryResult, CategoryScore, SubjectCategoryScore};
pub use export::{export_report, ExportFormat, ReportRef};
pub use layer_time::{run_layer_time, run_layer_time_windows, LayerTimeResult, SubjectLayerTime};
pub use topo::{run_topo, RegionStat, RegionSummary, SubjectTopo, TopoResult};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("subject {subject_id}, model {model_id}: {source}")]
    Subject {
        subject_id: String,
        model_id: String,
        #[source]
        source: Box<AnalysisError>,
    },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AnalysisError {
    fn in_subject(self, subject_id: &str, model_id: &str) -> Self {
        AnalysisError::Subject {
            subject_id: subject_id.to_string(),
            model_id: model_id.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, past any subject context.
    pub fn root(&self) -> &AnalysisError {
        match self {
            AnalysisError::Subject { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Which feature layer(s) feed the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerSelector {
    #[default]
    Final,
    Index(usize),
    /// All layers concatenated along the feature axis.
    All,
}

impl LayerSelector {
    pub fn resolve(self, n_layers: usize) -> Result<Vec<usize>, AnalysisError> {
        match self {
            LayerSelector::Final => Ok(vec![n_layers - 1]),
            LayerSelector::All => Ok((0..n_layers).collect()),
            LayerSelector::Index(k) if k < n_layers => Ok(vec![k]),
            LayerSelector::Index(k) => {
                Err(AnalysisError::Parameter(format!("layer index {k} out of range for {n_layers} layers")))
            }
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::Final => f.write_str("final"),
            LayerSelector::All => f.write_str("all"),
            LayerSelector::Index(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for LayerSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "final" | "last" => Ok(LayerSelector::Final),
            "all" => Ok(LayerSelector::All),
            other => other
                .parse()
                .map(LayerSelector::Index)
                .map_err(|_| format!("expected `final`, `all` or a layer index, got {other:?}")),
        }
    }
}

impl Serialize for LayerSelector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerSelector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which out-of-fold predictions the Spearman, CKA and RDM metrics see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricPooling {
    /// All folds' predictions pooled into one matrix.
    #[default]
    Pooled,
    /// Computed within each test fold, then averaged.
    PerFold,
}

/// Settings shared by every analysis; embedded verbatim in each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub cv: CvConfig,
    pub layer: LayerSelector,
    /// Shuffles per subject for the permutation null; 0 skips significance testing.
    pub n_permutations: usize,
    pub permutation_seed: u64,
    pub metric_pooling: MetricPooling,
    /// Optional baseline window subtracted before repetition averaging.
    pub baseline_ms: Option<(f64, f64)>,
    pub window_ms: f64,
    /// Categories with fewer stimuli are reported but not scored.
    pub min_category_n: usize,
    pub category_mode: CategoryMode,
    /// Subjects to include; empty means all.
    pub subjects: Vec<String>,
}

pub const DEFAULT_PERMUTATIONS: usize = 200;

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            cv: CvConfig { target_pca: Some(DEFAULT_PCA_DIM), ..CvConfig::default() },
            layer: LayerSelector::Final,
            n_permutations: DEFAULT_PERMUTATIONS,
            permutation_seed: 0,
            metric_pooling: MetricPooling::Pooled,
            baseline_ms: None,
            window_ms: 100.0,
            min_category_n: 5,
            category_mode: CategoryMode::Global,
            subjects: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        self.cv.validate()?;
        if !(self.window_ms.is_finite() && self.window_ms > 0.0) {
            return Err(AnalysisError::Parameter(format!("window_ms must be > 0, got {}", self.window_ms)));
        }
        Ok(())
    }
}

pub(crate) fn model<'a>(dataset: &'a Dataset, model_id: &str) -> Result<&'a FeatureTensor, AnalysisError> {
    dataset.model(model_id).ok_or_else(|| {
        let known: Vec<&str> = dataset.models.iter().map(|m| m.model_id()).collect();
        AnalysisError::Parameter(format!("unknown model {model_id:?}; dataset has {known:?}"))
    })
}

/// Subjects passing the config filter, with their index in the dataset.
pub(crate) fn selected_subjects<'a>(
    dataset: &'a Dataset,
    cfg: &AnalysisConfig,
) -> Result<Vec<(usize, &'a Subject)>, AnalysisError> {
    if let Some(missing) = cfg.subjects.iter().find(|id| dataset.subject(id).is_none()) {
        return Err(AnalysisError::Parameter(format!("unknown subject {missing:?}")));
    }
    let picked: Vec<(usize, &Subject)> = dataset
        .subjects
        .iter()
        .enumerate()
        .filter(|(_, s)| cfg.subjects.is_empty() || cfg.subjects.contains(&s.subject_id))
        .collect();
    if picked.is_empty() {
        return Err(AnalysisError::Parameter("no subject selected".into()));
    }
    Ok(picked)
}

/// Baseline-corrected (optionally) and repetition-averaged epochs.
pub(crate) fn averaged_epochs(subject: &Subject, cfg: &AnalysisConfig) -> Result<EegEpochs, AnalysisError> {
    let epochs = match cfg.baseline_ms {
        Some((a, b)) => preprocess::baseline_correct(&subject.epochs, a, b)?,
        None => subject.epochs.clone(),
    };
    Ok(preprocess::average_repetitions(&epochs))
}

/// Feature matrix of the selected layer(s), rows following `ids`.
pub(crate) fn feature_matrix(
    features: &FeatureTensor,
    layers: &[usize],
    ids: &[String],
) -> Result<DMatrix<f64>, AnalysisError> {
    let missing = features.missing_ids(ids);
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(10).map(|s| s.to_string()).collect();
        return Err(AnalysisError::Alignment(format!(
            "model {} lacks features for {} stimuli, e.g. {shown:?}",
            features.model_id(),
            missing.len()
        )));
    }
    let blocks: Vec<DMatrix<f64>> = layers.iter().map(|&l| features.layer_matrix(l, ids)).collect::<Result<_, _>>()?;
    if blocks.len() == 1 {
        return Ok(blocks.into_iter().next().expect("one block"));
    }
    let width = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(ids.len(), width);
    let mut col = 0;
    for b in &blocks {
        out.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    Ok(out)
}

/// Flattened full-epoch responses, one row per stimulus.
pub(crate) fn full_epoch_target(averaged: &EegEpochs) -> Result<DMatrix<f64>, AnalysisError> {
    Ok(preprocess::window_flatten(averaged, averaged.t_start_ms(), averaged.t_end_ms())?)
}

/// Sample standard deviation; `None` below two values.
pub(crate) fn sample_std(values: &[f64]) -> Option<f64> {
    crate::stats::aggregate_subjects(values).ok().and_then(|a| a.std)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
