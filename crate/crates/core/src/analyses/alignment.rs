use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    averaged_epochs, feature_matrix, full_epoch_target, model, selected_subjects, AnalysisConfig, AnalysisError,
    MetricPooling,
};
use crate::data::{Dataset, Subject};
use crate::encoder::{cv_encode, CvResult};
use crate::metrics::{self, MetricsError, RankMethod, Rdm};
use crate::stats::{self, SignificanceResult, SubjectAggregate};
use crate::synth::derive_seed;

/// The five similarity measures reported per subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    /// Cross-validated encoding score (mean of fold scores).
    pub pearson: T,
    /// Mean per-column Spearman rho of out-of-fold predictions.
    pub spearman: T,
    /// Linear CKA of predictions and responses.
    pub cka: T,
    /// Spearman correlation of predicted and observed RDMs.
    pub rsa: T,
    /// Kendall tau-b of predicted and observed RDMs.
    pub kendall: T,
}

impl<T> MetricSet<T> {
    pub const NAMES: [&'static str; 5] = ["pearson", "spearman", "cka", "rsa", "kendall"];

    pub fn values(&self) -> [&T; 5] {
        [&self.pearson, &self.spearman, &self.cka, &self.rsa, &self.kendall]
    }

    fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        Self { pearson: f(0), spearman: f(1), cka: f(2), rsa: f(3), kendall: f(4) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectAlignment {
    pub subject_id: String,
    pub n_stimuli: usize,
    /// `None` marks a metric that is undefined for this subject (constant input).
    pub metrics: MetricSet<Option<f64>>,
    /// Mean per-column Pearson r of pooled out-of-fold predictions.
    pub pearson_pooled: Option<f64>,
    pub fold_scores: Vec<f64>,
    pub alphas: Vec<f64>,
    pub significance: Option<SignificanceResult>,
    pub null_mean: Option<f64>,
    pub null_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub model_id: String,
    pub layers: Vec<String>,
    pub subjects: Vec<SubjectAlignment>,
    /// Mean and sample std across subjects with a defined value.
    pub aggregate: MetricSet<Option<SubjectAggregate>>,
    pub config: AnalysisConfig,
}

impl AlignmentReport {
    /// Aggregate of the named metric, if any subject defines it.
    pub fn aggregate_of(&self, metric: &str) -> Option<SubjectAggregate> {
        let i = MetricSet::<()>::NAMES.iter().position(|m| *m == metric)?;
        *self.aggregate.values()[i]
    }
}

/// Everything derived from one subject's cross-validated fit.
pub(crate) struct SubjectFit {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub ids: Vec<String>,
    pub cv: CvResult,
}

pub(crate) fn fit_subject(
    subject: &Subject,
    features: &crate::data::FeatureTensor,
    layers: &[usize],
    cfg: &AnalysisConfig,
) -> Result<SubjectFit, AnalysisError> {
    let averaged = averaged_epochs(subject, cfg)?;
    let ids = averaged.stimulus_ids().to_vec();
    let x = feature_matrix(features, layers, &ids)?;
    let y = full_epoch_target(&averaged)?;
    let cv = cv_encode(&x, &y, &cfg.cv)?;
    Ok(SubjectFit { x, y, ids, cv })
}

fn defined(r: Result<f64, MetricsError>, what: &str, subject: &str) -> Result<Option<f64>, AnalysisError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::Undefined(why)) => {
            log::warn!("{what} undefined for subject {subject}: {why}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn column_score(
    pred: &DMatrix<f64>,
    y: &DMatrix<f64>,
    f: fn(&[f64], &[f64]) -> Result<f64, MetricsError>,
) -> Result<f64, MetricsError> {
    let m = metrics::column_mean(pred, y, f)?;
    if m.n_undefined == y.ncols() {
        return Err(MetricsError::Undefined("every target column is constant"));
    }
    Ok(m.value)
}

/// Spearman, CKA, RSA and Kendall of `pred` against `y`, in that order.
fn secondary_metrics(
    pred: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ids: &[String],
    sid: &str,
) -> Result<[Option<f64>; 4], AnalysisError> {
    let spearman = defined(column_score(pred, y, metrics::spearman), "spearman", sid)?;
    let cka = defined(metrics::linear_cka(pred, y), "cka", sid)?;
    let (rsa, kendall) = match (metrics::compute_rdm(pred, ids), metrics::compute_rdm(y, ids)) {
        (Ok(a), Ok(b)) => (
            defined(metrics::rsa_score(&a, &b, RankMethod::Spearman), "rsa", sid)?,
            defined(metrics::rsa_score(&a, &b, RankMethod::Kendall), "kendall", sid)?,
        ),
        (Err(e), _) | (_, Err(e)) => {
            let r = Err(e);
            (defined(r.clone(), "rsa", sid)?, defined(r, "kendall", sid)?)
        }
    };
    Ok([spearman, cka, rsa, kendall])
}

/// Each metric averaged over the folds where it is defined.
fn per_fold_metrics(fit: &SubjectFit, sid: &str) -> Result<[Option<f64>; 4], AnalysisError> {
    let mut sums = [(0.0, 0usize); 4];
    for fold in &fit.cv.folds {
        let rows = &fold.test_rows;
        let pred = fit.cv.oof_prediction.select_rows(rows.iter());
        let y = fit.y.select_rows(rows.iter());
        let ids: Vec<String> = rows.iter().map(|&r| fit.ids[r].clone()).collect();
        for (acc, v) in sums.iter_mut().zip(secondary_metrics(&pred, &y, &ids, sid)?) {
            if let Some(v) = v {
                acc.0 += v;
                acc.1 += 1;
            }
        }
    }
    Ok(sums.map(|(s, n)| (n > 0).then(|| s / n as f64)))
}

fn subject_alignment(
    index: usize,
    subject: &Subject,
    features: &crate::data::FeatureTensor,
    layers: &[usize],
    cfg: &AnalysisConfig,
) -> Result<SubjectAlignment, AnalysisError> {
    let sid = subject.subject_id.as_str();
    let fit = fit_subject(subject, features, layers, cfg)?;
    let pred = &fit.cv.oof_prediction;
    let pearson_pooled = defined(column_score(pred, &fit.y, metrics::pearson), "pooled pearson", sid)?;
    let [spearman, cka, rsa, kendall] = match cfg.metric_pooling {
        MetricPooling::Pooled => secondary_metrics(pred, &fit.y, &fit.ids, sid)?,
        MetricPooling::PerFold => per_fold_metrics(&fit, sid)?,
    };
    let (significance, null_mean, null_std) = if cfg.n_permutations > 0 {
        let seed = derive_seed(cfg.permutation_seed, index as u64);
        let null = stats::permutation_null(&fit.x, &fit.y, &cfg.cv, cfg.n_permutations, seed)?;
        let sig = stats::significance_test(&fit.cv.fold_scores, &null)?;
        (Some(sig), Some(null.mean()), Some(null.std()))
    } else {
        (None, None, None)
    };
    Ok(SubjectAlignment {
        subject_id: subject.subject_id.clone(),
        n_stimuli: fit.ids.len(),
        metrics: MetricSet { pearson: Some(fit.cv.rho), spearman, cka, rsa, kendall },
        pearson_pooled,
        fold_scores: fit.cv.fold_scores.clone(),
        alphas: fit.cv.alphas.clone(),
        significance,
        null_mean,
        null_std,
    })
}

/// The five-metric battery with permutation significance, per subject and aggregated.
pub fn run_alignment(
    dataset: &Dataset,
    model_id: &str,
    cfg: &AnalysisConfig,
) -> Result<AlignmentReport, AnalysisError> {
    cfg.validate()?;
    let features = model(dataset, model_id)?;
    let layers = cfg.layer.resolve(features.n_layers())?;
    let subjects = selected_subjects(dataset, cfg)?;
    let per_subject: Vec<SubjectAlignment> = subjects
        .par_iter()
        .map(|&(i, s)| {
            subject_alignment(i, s, features, &layers, cfg).map_err(|e| e.in_subject(&s.subject_id, model_id))
        })
        .collect::<Result<_, _>>()?;
    let aggregate = MetricSet::from_fn(|m| {
        let vals: Vec<f64> = per_subject.iter().filter_map(|s| *s.metrics.values()[m]).collect();
        stats::aggregate_subjects(&vals).ok()
    });
    Ok(AlignmentReport {
        model_id: model_id.to_string(),
        layers: layers.iter().map(|&l| features.layer_names()[l].clone()).collect(),
        subjects: per_subject,
        aggregate,
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRdm {
    pub subject_id: String,
    /// RDM of pooled out-of-fold predictions.
    pub predicted: Rdm,
    /// RDM of the measured responses.
    pub observed: Rdm,
    pub rsa_spearman: Option<f64>,
    pub rsa_kendall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdmResult {
    pub model_id: String,
    pub layers: Vec<String>,
    pub subjects: Vec<SubjectRdm>,
    pub config: AnalysisConfig,
}

/// Predicted and observed RDMs per subject.
pub fn run_rdm(dataset: &Dataset, model_id: &str, cfg: &AnalysisConfig) -> Result<RdmResult, AnalysisError> {
    cfg.validate()?;
    let features = model(dataset, model_id)?;
    let layers = cfg.layer.resolve(features.n_layers())?;
    let subjects = selected_subjects(dataset, cfg)?;
    let out: Vec<SubjectRdm> = subjects
        .par_iter()
        .map(|&(_, s)| {
            let run = || -> Result<SubjectRdm, AnalysisError> {
                let fit = fit_subject(s, features, &layers, cfg)?;
                let predicted = metrics::compute_rdm(&fit.cv.oof_prediction, &fit.ids)?;
                let observed = metrics::compute_rdm(&fit.y, &fit.ids)?;
                let sid = s.subject_id.as_str();
                Ok(SubjectRdm {
                    rsa_spearman: defined(metrics::rsa_score(&predicted, &observed, RankMethod::Spearman), "rsa", sid)?,
                    rsa_kendall: defined(
                        metrics::rsa_score(&predicted, &observed, RankMethod::Kendall),
                        "kendall",
                        sid,
                    )?,
                    subject_id: s.subject_id.clone(),
                    predicted,
                    observed,
                })
            };
            run().map_err(|e| e.in_subject(&s.subject_id, model_id))
        })
        .collect::<Result<_, _>>()?;
    Ok(RdmResult {
        model_id: model_id.to_string(),
        layers: layers.iter().map(|&l| features.layer_names()[l].clone()).collect(),
        subjects: out,
        config: cfg.clone(),
    })
}
