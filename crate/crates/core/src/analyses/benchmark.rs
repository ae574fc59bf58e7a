use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AlignmentReport, AnalysisError, MetricSet};
use crate::data::BenchmarkScore;
use crate::stats::{self, RegressionResult};

const BAND_POINTS: usize = 50;

/// A point on the fitted line with its 95% band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub x: f64,
    pub fit: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRegression {
    pub task: String,
    pub models: Vec<String>,
    /// Model similarity (aggregate mean of the chosen metric).
    pub x: Vec<f64>,
    /// Benchmark score.
    pub y: Vec<f64>,
    pub regression: RegressionResult,
    pub band: Vec<BandSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub metric: String,
    pub tasks: Vec<TaskRegression>,
}

/// Regresses each task's benchmark score on model-brain similarity.
///
/// `metric` names the aggregate used as similarity (`pearson` by default in the CLI).
/// Every task needs at least 3 models present in both inputs.
pub fn run_benchmark_corr(
    reports: &[AlignmentReport],
    scores: &[BenchmarkScore],
    metric: &str,
) -> Result<BenchmarkResult, AnalysisError> {
    if !MetricSet::<()>::NAMES.contains(&metric) {
        return Err(AnalysisError::Parameter(format!(
            "unknown metric {metric:?}; expected one of {:?}",
            MetricSet::<()>::NAMES
        )));
    }
    let mut similarity = BTreeMap::new();
    for r in reports {
        let agg = r
            .aggregate_of(metric)
            .ok_or_else(|| AnalysisError::Parameter(format!("report for {} has no defined {metric}", r.model_id)))?;
        if similarity.insert(r.model_id.as_str(), agg.mean).is_some() {
            return Err(AnalysisError::Parameter(format!("two reports for model {}", r.model_id)));
        }
    }
    let mut by_task: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for s in scores {
        by_task.entry(s.task.as_str()).or_default().push((s.model_id.as_str(), s.score));
    }
    if by_task.is_empty() {
        return Err(AnalysisError::Parameter("benchmark file holds no scores".into()));
    }
    let mut tasks = Vec::new();
    for (task, rows) in by_task {
        let mut paired: Vec<(&str, f64, f64)> =
            rows.iter().filter_map(|&(m, y)| similarity.get(m).map(|&x| (m, x, y))).collect();
        paired.sort_by(|a, b| a.0.cmp(b.0));
        if paired.len() < 3 {
            return Err(AnalysisError::Parameter(format!(
                "task {task} pairs {} model(s) with a report; regression needs 3",
                paired.len()
            )));
        }
        let x: Vec<f64> = paired.iter().map(|p| p.1).collect();
        let y: Vec<f64> = paired.iter().map(|p| p.2).collect();
        let regression = stats::ols_fit(&x, &y)?;
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let band = (0..BAND_POINTS)
            .map(|i| {
                let xi = lo + (hi - lo) * i as f64 / (BAND_POINTS - 1) as f64;
                let (lower, upper) = regression.band(xi);
                BandSample { x: xi, fit: regression.predict(xi), lower, upper }
            })
            .collect();
        tasks.push(TaskRegression {
            task: task.to_string(),
            models: paired.iter().map(|p| p.0.to_string()).collect(),
            x,
            y,
            regression,
            band,
        });
    }
    Ok(BenchmarkResult { metric: metric.to_string(), tasks })
}
