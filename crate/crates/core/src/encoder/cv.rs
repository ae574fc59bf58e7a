use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ridge, CvConfig, EncoderError, RidgeSpectrum, ScoreMode};
use crate::data::FeatureTensor;
use crate::metrics::{self, MetricsError};
use crate::preprocess::{self, FitScope, PcaState, StandardizerState};
use crate::synth::{derive_seed, StreamRng};

/// Outer and inner fold labels for every row.
///
/// Rows are shuffled with the seed, then split into `k` contiguous outer
/// folds (the first `n % k` folds get one extra row). Inside each outer fold
/// the shuffled position modulo `k` is the row's inner label, used for alpha
/// selection, so each inner fold draws evenly from the other outer folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub outer: Vec<usize>,
    pub inner: Vec<usize>,
}

impl FoldAssignment {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self, EncoderError> {
        if k < 2 {
            return Err(EncoderError::Parameter(format!("need k >= 2 folds, got {k}")));
        }
        if n < k {
            return Err(EncoderError::Parameter(format!("{n} rows cannot be split into {k} folds")));
        }
        let order = StreamRng::new(seed).permutation(n);
        let (mut outer, mut inner) = (vec![0; n], vec![0; n]);
        let mut start = 0;
        for f in 0..k {
            let size = n / k + usize::from(f < n % k);
            for (pos, &row) in order[start..start + size].iter().enumerate() {
                outer[row] = f;
                inner[row] = pos % k;
            }
            start += size;
        }
        Ok(Self { k, outer, inner })
    }

    pub fn n(&self) -> usize {
        self.outer.len()
    }

    /// Labels for data whose row `i` is row `perm[i]` of the original.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            k: self.k,
            outer: perm.iter().map(|&p| self.outer[p]).collect(),
            inner: perm.iter().map(|&p| self.inner[p]).collect(),
        }
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.outer[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.outer[i] != fold).collect()
    }
}

/// Mean per-column Pearson r between predictions and targets.
///
/// Columns with zero variance on either side contribute 0 and stay in the count.
pub fn score_pearson_columns(yhat: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64, EncoderError> {
    if yhat.shape() != y.shape() {
        return Err(EncoderError::Parameter(format!(
            "prediction shape {:?} differs from target shape {:?}",
            yhat.shape(),
            y.shape()
        )));
    }
    if y.nrows() < 3 {
        return Err(EncoderError::Parameter(format!("scoring needs at least 3 rows, got {}", y.nrows())));
    }
    Ok(metrics::column_mean(yhat, y, metrics::pearson_core)?.value)
}

pub fn score_predictions(yhat: &DMatrix<f64>, y: &DMatrix<f64>, mode: ScoreMode) -> Result<f64, EncoderError> {
    match mode {
        ScoreMode::PerColumn => score_pearson_columns(yhat, y),
        ScoreMode::Flattened => {
            if yhat.shape() != y.shape() || y.nrows() < 3 {
                return score_pearson_columns(yhat, y);
            }
            match metrics::pearson_core(yhat.as_slice(), y.as_slice()) {
                Ok(r) => Ok(r),
                Err(MetricsError::Undefined(_)) => Ok(0.0),
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    m.select_rows(rows.iter())
}

/// Grid alpha with the best mean inner-fold score; ties go to the smaller alpha.
///
/// Models are fitted to `y_fit`; predictions are mapped back through `y_pca`
/// (when given) and scored against the matching rows of `y_score`.
#[allow(clippy::too_many_arguments)]
fn select_alpha_labeled(
    x: &DMatrix<f64>,
    y_fit: &DMatrix<f64>,
    y_score: &DMatrix<f64>,
    y_pca: Option<&PcaState>,
    labels: &[usize],
    k: usize,
    grid: &[f64],
    mode: ScoreMode,
) -> Result<f64, EncoderError> {
    let mut totals = vec![0.0; grid.len()];
    let mut used = 0usize;
    for fold in 0..k {
        let val: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == fold).collect();
        let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != fold).collect();
        if val.len() < 3 || train.len() < 2 {
            continue;
        }
        let mut spectrum = RidgeSpectrum::new(&select_rows(x, &train), &select_rows(y_fit, &train));
        if let Some(p) = y_pca {
            spectrum.map_targets(&p.components, &p.mean);
        }
        let projected = spectrum.project(&select_rows(x, &val));
        let y_val = select_rows(y_score, &val);
        for (total, &alpha) in totals.iter_mut().zip(grid) {
            *total += score_predictions(&spectrum.predict_projected(&projected, alpha), &y_val, mode)?;
        }
        used += 1;
    }
    if used == 0 {
        log::warn!("no inner fold has 3 validation rows ({} training rows); using alpha = {}", labels.len(), grid[0]);
        return Ok(grid[0]);
    }
    let mut best = 0;
    for i in 1..grid.len() {
        if totals[i] > totals[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Inner-CV alpha selection on a training split.
pub fn select_alpha(x_train: &DMatrix<f64>, y_train: &DMatrix<f64>, cfg: &CvConfig) -> Result<f64, EncoderError> {
    cfg.validate()?;
    if x_train.nrows() != y_train.nrows() {
        return Err(EncoderError::Parameter("X and Y row counts differ".into()));
    }
    let folds = FoldAssignment::new(x_train.nrows(), cfg.k_folds, derive_seed(cfg.rng_seed, u64::MAX))?;
    select_alpha_labeled(x_train, y_train, y_train, None, &folds.outer, cfg.k_folds, &cfg.alpha_grid, cfg.score_mode)
}

/// Fitted feature/target transforms of one fold (or of all rows).
struct Pipeline {
    x_std: Option<StandardizerState>,
    x_pca: Option<PcaState>,
    y_std: Option<StandardizerState>,
    y_pca: Option<PcaState>,
}

impl Pipeline {
    fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &CvConfig, label: &str) -> Result<Self, EncoderError> {
        let (x_std, xs) = fit_standardizer(x, cfg.standardize, label)?;
        let x_pca = fit_pca(&xs, cfg.feature_pca)?;
        let (y_std, ys) = fit_standardizer(y, cfg.standardize, label)?;
        let y_pca = fit_pca(&ys, cfg.target_pca)?;
        Ok(Self { x_std, x_pca, y_std, y_pca })
    }

    fn x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        transform(x, self.x_std.as_ref(), self.x_pca.as_ref())
    }

    /// Targets in the space the ridge model is fitted in.
    fn y(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        transform(y, self.y_std.as_ref(), self.y_pca.as_ref())
    }

    /// Targets in the space scores are computed in: standardized, not rotated.
    fn y_scored(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        transform(y, self.y_std.as_ref(), None)
    }

    /// Model-space predictions back to the scored space.
    fn unrotate(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.y_pca {
            Some(p) => preprocess::pca_inverse(p, z),
            None => z.clone(),
        }
    }

    fn unstandardize(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.y_std {
            Some(s) => preprocess::standardize_inverse(s, z),
            None => z.clone(),
        }
    }
}

fn fit_standardizer(
    m: &DMatrix<f64>,
    enabled: bool,
    label: &str,
) -> Result<(Option<StandardizerState>, DMatrix<f64>), EncoderError> {
    if !enabled {
        return Ok((None, m.clone()));
    }
    let st = preprocess::standardize_fit_on(m, label)?;
    let out = preprocess::standardize_apply(&st, m);
    Ok((Some(st), out))
}

fn fit_pca(m: &DMatrix<f64>, k: Option<usize>) -> Result<Option<PcaState>, EncoderError> {
    match k {
        Some(k) if m.ncols() > 1 && m.nrows() > 1 => Ok(Some(preprocess::pca_fit_clamped(m, k)?)),
        _ => Ok(None),
    }
}

fn transform(m: &DMatrix<f64>, st: Option<&StandardizerState>, pca: Option<&PcaState>) -> DMatrix<f64> {
    let m = match st {
        Some(s) => preprocess::standardize_apply(s, m),
        None => m.clone(),
    };
    match pca {
        Some(p) => preprocess::pca_transform(p, &m),
        None => m,
    }
}

/// One outer fold of a cross-validated encoding run.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub test_rows: Vec<usize>,
    pub alpha: f64,
    pub score: f64,
    /// Held-out predictions in the fold's standardized target space (PCA undone).
    pub prediction: DMatrix<f64>,
    /// Held-out targets in the same space.
    pub target: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Mean of the fold scores.
    pub rho: f64,
    pub fold_scores: Vec<f64>,
    pub alphas: Vec<f64>,
    pub folds: Vec<FoldOutcome>,
    /// Out-of-fold predictions mapped back to the original target space, in input row order.
    pub oof_prediction: DMatrix<f64>,
    pub seed: u64,
}

/// K-fold ridge encoding with nested alpha selection.
pub fn cv_encode(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &CvConfig) -> Result<CvResult, EncoderError> {
    cfg.validate()?;
    let folds = FoldAssignment::new(x.nrows(), cfg.k_folds, cfg.rng_seed)?;
    cv_encode_with_folds(x, y, cfg, &folds)
}

pub fn cv_encode_with_folds(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &CvConfig,
    folds: &FoldAssignment,
) -> Result<CvResult, EncoderError> {
    cfg.validate()?;
    let n = x.nrows();
    if y.nrows() != n || folds.n() != n {
        return Err(EncoderError::Parameter(format!("row mismatch: X {n}, Y {}, folds {}", y.nrows(), folds.n())));
    }
    if folds.k != cfg.k_folds {
        return Err(EncoderError::Parameter(format!(
            "fold assignment has {} folds, config asks for {}",
            folds.k, cfg.k_folds
        )));
    }
    let tests: Vec<Vec<usize>> = (0..folds.k).map(|f| folds.test_rows(f)).collect();
    if let Some(small) = tests.iter().map(Vec::len).min().filter(|&s| s < 3) {
        return Err(EncoderError::Parameter(format!(
            "each fold needs at least 3 held-out rows; {n} rows in {} folds leaves {small}",
            folds.k
        )));
    }
    let global = match cfg.fit_scope {
        FitScope::Global => Some(Pipeline::fit(x, y, cfg, "all rows")?),
        FitScope::TrainFold => None,
    };

    let outcomes: Vec<(FoldOutcome, DMatrix<f64>)> = tests
        .into_par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train = folds.train_rows(f);
            let (x_tr, y_tr) = (select_rows(x, &train), select_rows(y, &train));
            let local;
            let pipe = match &global {
                Some(p) => p,
                None => {
                    local = Pipeline::fit(&x_tr, &y_tr, cfg, &format!("train split of fold {f}"))?;
                    &local
                }
            };
            let (xt, yt) = (pipe.x(&x_tr), pipe.y(&y_tr));
            let inner: Vec<usize> = train.iter().map(|&i| folds.inner[i]).collect();
            let alpha = select_alpha_labeled(
                &xt,
                &yt,
                &pipe.y_scored(&y_tr),
                pipe.y_pca.as_ref(),
                &inner,
                folds.k,
                &cfg.alpha_grid,
                cfg.score_mode,
            )?;
            let fit = ridge::ridge_solve(&xt, &yt, alpha)?;
            let x_te = pipe.x(&select_rows(x, &test));
            let target = pipe.y_scored(&select_rows(y, &test));
            let prediction = pipe.unrotate(&ridge::predict(&fit, &x_te)?);
            let score = score_predictions(&prediction, &target, cfg.score_mode)?;
            let original = pipe.unstandardize(&prediction);
            Ok((FoldOutcome { test_rows: test, alpha, score, prediction, target }, original))
        })
        .collect::<Result<_, EncoderError>>()?;

    let mut oof = DMatrix::zeros(n, y.ncols());
    let mut folds_out = Vec::with_capacity(outcomes.len());
    for (outcome, original) in outcomes {
        for (r, &row) in outcome.test_rows.iter().enumerate() {
            oof.set_row(row, &original.row(r));
        }
        folds_out.push(outcome);
    }
    let fold_scores: Vec<f64> = folds_out.iter().map(|f| f.score).collect();
    let rho = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
    Ok(CvResult {
        rho,
        alphas: folds_out.iter().map(|f| f.alpha).collect(),
        fold_scores,
        folds: folds_out,
        oof_prediction: oof,
        seed: cfg.rng_seed,
    })
}

/// Per-layer cross-validated scores of one model against one target matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer_names: Vec<String>,
    pub rho: Vec<f64>,
    pub fold_scores: Vec<Vec<f64>>,
    pub alphas: Vec<Vec<f64>>,
}

/// Scores every layer of `features` against `y`, whose rows follow `ids`.
pub fn encode_layers(
    features: &FeatureTensor,
    ids: &[String],
    y: &DMatrix<f64>,
    cfg: &CvConfig,
) -> Result<LayerScores, EncoderError> {
    let results: Vec<CvResult> = (0..features.n_layers())
        .into_par_iter()
        .map(|l| cv_encode(&features.layer_matrix(l, ids)?, y, cfg))
        .collect::<Result<_, _>>()?;
    Ok(LayerScores {
        layer_names: features.layer_names().to_vec(),
        rho: results.iter().map(|r| r.rho).collect(),
        fold_scores: results.iter().map(|r| r.fold_scores.clone()).collect(),
        alphas: results.iter().map(|r| r.alphas.clone()).collect(),
    })
}
