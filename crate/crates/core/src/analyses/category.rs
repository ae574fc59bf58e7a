use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alignment::fit_subject;
use super::{mean, model, sample_std, selected_subjects, AnalysisConfig, AnalysisError};
use crate::data::{CategoryLabels, Dataset};
use crate::encoder::{cv_encode, score_predictions};

/// How per-category scores are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryMode {
    /// One fit on all stimuli; each category is scored on its out-of-fold rows.
    #[default]
    Global,
    /// A separate cross-validated fit on each category's stimuli.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectCategoryScore {
    pub subject_id: String,
    pub score: Option<f64>,
    /// Sample std of the per-fold scores that entered `score`.
    pub fold_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    /// Labelled stimuli of this category among the scored stimuli.
    pub n: usize,
    /// Below the minimum size: reported, not scored.
    pub flagged: bool,
    /// Mean over subjects with a score.
    pub score: Option<f64>,
    /// Sample std over subjects.
    pub std: Option<f64>,
    pub per_subject: Vec<SubjectCategoryScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub model_id: String,
    pub mode: CategoryMode,
    pub categories: Vec<CategoryScore>,
    /// Scored stimuli without a label.
    pub n_unlabelled: usize,
    pub config: AnalysisConfig,
}

/// A subject's category score and its spread over folds.
type ScoreAndSpread = (Option<f64>, Option<f64>);

/// Encoding scores restricted to each stimulus category.
pub fn run_category(
    dataset: &Dataset,
    model_id: &str,
    labels: &CategoryLabels,
    cfg: &AnalysisConfig,
) -> Result<CategoryResult, AnalysisError> {
    cfg.validate()?;
    let features = model(dataset, model_id)?;
    let layers = cfg.layer.resolve(features.n_layers())?;
    let subjects = selected_subjects(dataset, cfg)?;

    let scored: BTreeSet<&str> =
        subjects.iter().flat_map(|(_, s)| s.epochs.stimulus_ids().iter().map(String::as_str)).collect();
    let mut counts: BTreeMap<&str, usize> = labels.categories().iter().map(|c| (c.as_str(), 0)).collect();
    let mut n_unlabelled = 0;
    for id in &scored {
        match labels.category_of(id) {
            Some(c) => *counts.get_mut(c).expect("declared category") += 1,
            None => n_unlabelled += 1,
        }
    }
    if n_unlabelled == scored.len() {
        return Err(AnalysisError::Alignment("no scored stimulus carries a category label".into()));
    }
    if n_unlabelled > 0 {
        log::warn!("{n_unlabelled} scored stimuli have no category label and are ignored");
    }
    let active: Vec<&str> = counts.iter().filter(|(_, &n)| n >= cfg.min_category_n.max(1)).map(|(c, _)| *c).collect();

    let per_subject: Vec<BTreeMap<String, ScoreAndSpread>> = subjects
        .par_iter()
        .map(|&(_, s)| {
            let run = || -> Result<_, AnalysisError> {
                let fit = fit_subject(s, features, &layers, cfg)?;
                let row_category: Vec<Option<&str>> = fit.ids.iter().map(|id| labels.category_of(id)).collect();
                let mut out = BTreeMap::new();
                for &cat in &active {
                    let scores: Vec<f64> = match cfg.category_mode {
                        CategoryMode::Global => category_fold_scores(&fit, &row_category, cat, cfg)?,
                        CategoryMode::Refit => {
                            let rows: Vec<usize> =
                                (0..fit.ids.len()).filter(|&i| row_category[i] == Some(cat)).collect();
                            if rows.len() < 3 * cfg.cv.k_folds {
                                log::warn!(
                                    "category {cat} has {} stimuli for subject {}; refit needs {}",
                                    rows.len(),
                                    s.subject_id,
                                    3 * cfg.cv.k_folds
                                );
                                Vec::new()
                            } else {
                                let x = fit.x.select_rows(rows.iter());
                                let y = fit.y.select_rows(rows.iter());
                                cv_encode(&x, &y, &cfg.cv)?.fold_scores
                            }
                        }
                    };
                    let entry =
                        if scores.is_empty() { (None, None) } else { (Some(mean(&scores)), sample_std(&scores)) };
                    out.insert(cat.to_string(), entry);
                }
                Ok(out)
            };
            run().map_err(|e| e.in_subject(&s.subject_id, model_id))
        })
        .collect::<Result<_, _>>()?;

    let categories = counts
        .iter()
        .map(|(&cat, &n)| {
            let flagged = !active.contains(&cat);
            let per: Vec<SubjectCategoryScore> = if flagged {
                Vec::new()
            } else {
                subjects
                    .iter()
                    .zip(&per_subject)
                    .map(|((_, s), m)| {
                        let (score, fold_std) = m[cat];
                        SubjectCategoryScore { subject_id: s.subject_id.clone(), score, fold_std }
                    })
                    .collect()
            };
            let vals: Vec<f64> = per.iter().filter_map(|p| p.score).collect();
            CategoryScore {
                category: cat.to_string(),
                n,
                flagged,
                score: (!vals.is_empty()).then(|| mean(&vals)),
                std: sample_std(&vals),
                per_subject: per,
            }
        })
        .collect();
    Ok(CategoryResult {
        model_id: model_id.to_string(),
        mode: cfg.category_mode,
        categories,
        n_unlabelled,
        config: cfg.clone(),
    })
}

/// Fold scores over the category's held-out rows, for folds holding at least 3 of them.
fn category_fold_scores(
    fit: &super::alignment::SubjectFit,
    row_category: &[Option<&str>],
    cat: &str,
    cfg: &AnalysisConfig,
) -> Result<Vec<f64>, AnalysisError> {
    let mut scores = Vec::new();
    for fold in &fit.cv.folds {
        let local: Vec<usize> = fold
            .test_rows
            .iter()
            .enumerate()
            .filter(|(_, &row)| row_category[row] == Some(cat))
            .map(|(i, _)| i)
            .collect();
        if local.len() < 3 {
            continue;
        }
        let pred = fold.prediction.select_rows(local.iter());
        let target = fold.target.select_rows(local.iter());
        scores.push(score_predictions(&pred, &target, cfg.cv.score_mode)?);
    }
    Ok(scores)
}
