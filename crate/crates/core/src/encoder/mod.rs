//! Ridge encoding models: closed-form fits, cross-validated layer scores, and
//! channel × window / layer × window score maps.

mod cv;
mod grid;
mod ridge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::preprocess::{FitScope, PreprocessError};

pub use cv::{
    cv_encode, cv_encode_with_folds, encode_layers, score_pearson_columns, score_predictions, select_alpha, CvResult,
    FoldAssignment, FoldOutcome, LayerScores,
};
pub use grid::{channel_window_encode, layer_time_grid, layer_time_grid_windows, tile_windows, LayerTimeGrid, Window};
pub use ridge::{predict, ridge_solve, ridge_solve_with, RidgeFit, RidgeOptions, SolvePath};

pub(crate) use ridge::RidgeSpectrum;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How fold predictions are compared with held-out targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Mean over target columns of the per-column Pearson r.
    #[default]
    PerColumn,
    /// Pearson r of the flattened prediction and target matrices.
    Flattened,
}

/// Target built for each channel in channel-wise encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelTarget {
    /// Mean amplitude in the window (one scalar per stimulus).
    #[default]
    WindowMean,
    /// All samples of the window.
    Flattened,
}

/// Cross-validation and preprocessing settings shared by every encoding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k_folds: usize,
    pub alpha_grid: Vec<f64>,
    pub rng_seed: u64,
    pub fit_scope: FitScope,
    /// z-score features and targets before fitting.
    pub standardize: bool,
    /// Target PCA dimensionality, clamped to `min(n_train - 1, d)`. Off here;
    /// [`AnalysisConfig`](crate::AnalysisConfig) turns it on for EEG.
    pub target_pca: Option<usize>,
    /// Feature PCA dimensionality; off by default.
    pub feature_pca: Option<usize>,
    pub score_mode: ScoreMode,
    pub channel_target: ChannelTarget,
}

pub const DEFAULT_PCA_DIM: usize = 256;

/// `points` log-uniform values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points).map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64)).collect()
        }
    }
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            alpha_grid: log_grid(1e-2, 1e3, 20),
            rng_seed: 0,
            fit_scope: FitScope::TrainFold,
            standardize: true,
            target_pca: None,
            feature_pca: None,
            score_mode: ScoreMode::PerColumn,
            channel_target: ChannelTarget::WindowMean,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.k_folds < 2 {
            return Err(EncoderError::Parameter(format!("k_folds must be >= 2, got {}", self.k_folds)));
        }
        if self.alpha_grid.is_empty() {
            return Err(EncoderError::Parameter("alpha grid is empty".into()));
        }
        if self.alpha_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(EncoderError::Parameter("alpha grid values must be finite and > 0".into()));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EncoderError::Parameter("alpha grid must be strictly ascending".into()));
        }
        if self.target_pca == Some(0) || self.feature_pca == Some(0) {
            return Err(EncoderError::Parameter("PCA dimensionality must be >= 1".into()));
        }
        Ok(())
    }
}
