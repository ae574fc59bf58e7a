//! Permutation nulls, significance tests, subject aggregation and simple OLS.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::encoder::{cv_encode_with_folds, CvConfig, EncoderError, FoldAssignment};
use crate::synth::StreamRng;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Scores of one statistic recomputed on shuffled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub values: Vec<f64>,
    pub seed: u64,
    pub statistic_name: String,
}

impl NullDistribution {
    pub fn new(values: Vec<f64>, seed: u64, statistic_name: impl Into<String>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::Parameter("null distribution needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::Parameter("null distribution values must be finite".into()));
        }
        Ok(Self { values, seed, statistic_name: statistic_name.into() })
    }

    pub fn n_perm(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation; 0 for a single value.
    pub fn std(&self) -> f64 {
        sample_std(&self.values).unwrap_or(0.0)
    }

    /// `(1 + #{null >= observed}) / (1 + n_perm)`.
    pub fn empirical_p(&self, observed: f64) -> f64 {
        let exceed = self.values.iter().filter(|&&v| v >= observed).count();
        (1 + exceed) as f64 / (1 + self.values.len()) as f64
    }
}

/// Cross-validated score under `n_perm` seeded row shuffles of `y`.
///
/// `x`, the fold labels and the alpha-selection protocol are held fixed.
/// Permutation `i` draws from its own derived stream, so results do not
/// depend on thread count.
pub fn permutation_null(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &CvConfig,
    n_perm: usize,
    seed: u64,
) -> Result<NullDistribution, StatsError> {
    if n_perm == 0 {
        return Err(StatsError::Parameter("n_perm must be >= 1".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(StatsError::Parameter(format!("X has {} rows, Y has {}", x.nrows(), y.nrows())));
    }
    cfg.validate()?;
    let folds = FoldAssignment::new(x.nrows(), cfg.k_folds, cfg.rng_seed)?;
    let values = (0..n_perm as u64)
        .into_par_iter()
        .map(|i| {
            let perm = StreamRng::derived(seed, i).permutation(y.nrows());
            let shuffled = y.select_rows(perm.iter());
            cv_encode_with_folds(x, &shuffled, cfg, &folds).map(|r| r.rho)
        })
        .collect::<Result<Vec<_>, _>>()?;
    NullDistribution::new(values, seed, "cv_pearson")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// One-sample t statistic of the fold scores against the null mean;
    /// `None` when the fold scores have zero variance.
    pub t: Option<f64>,
    /// One-sided (greater) p-value for `t` with `k - 1` degrees of freedom.
    pub p: Option<f64>,
    pub empirical_p: f64,
    pub observed_mean: f64,
    pub null_mean: f64,
    pub df: usize,
}

impl SignificanceResult {
    pub fn is_degenerate(&self) -> bool {
        self.t.is_none()
    }
}

pub fn significance_test(
    observed_fold_scores: &[f64],
    null: &NullDistribution,
) -> Result<SignificanceResult, StatsError> {
    let k = observed_fold_scores.len();
    if k < 2 {
        return Err(StatsError::Parameter(format!("need at least 2 fold scores, got {k}")));
    }
    if null.values.is_empty() {
        return Err(StatsError::Parameter("null distribution is empty".into()));
    }
    let mean = observed_fold_scores.iter().sum::<f64>() / k as f64;
    let null_mean = null.mean();
    let sd = sample_std(observed_fold_scores).expect("k >= 2");
    let df = k - 1;
    let (t, p) = if sd > 0.0 {
        let t = (mean - null_mean) / (sd / (k as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
        (Some(t), Some(dist.sf(t).max(f64::MIN_POSITIVE)))
    } else {
        log::warn!("fold scores have zero variance; t-test is degenerate, only the empirical p is reported");
        (None, None)
    };
    Ok(SignificanceResult { t, p, empirical_p: null.empirical_p(mean), observed_mean: mean, null_mean, df })
}

/// Mean and sample standard deviation across subjects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectAggregate {
    pub mean: f64,
    /// `None` for a single subject.
    pub std: Option<f64>,
    pub n: usize,
}

pub fn aggregate_subjects(values: &[f64]) -> Result<SubjectAggregate, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Parameter("no subject values to aggregate".into()));
    }
    Ok(SubjectAggregate {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        std: sample_std(values),
        n: values.len(),
    })
}

fn sample_std(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    if values.iter().all(|&v| v == values[0]) {
        return Some(0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

/// Two-sided Student-t critical value: `P(T <= q) = p` with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let mut q = dist.inverse_cdf(p);
    // polish with Newton steps on the incomplete-beta CDF
    for _ in 0..4 {
        let step = (dist.cdf(q) - p) / statrs::distribution::Continuous::pdf(&dist, q);
        if !step.is_finite() {
            break;
        }
        q -= step;
        if step.abs() < 1e-15 * q.abs().max(1.0) {
            break;
        }
    }
    q
}

/// Pointwise 95% band of the fitted mean, `ŷ(x) ± t · s · sqrt(1/n + (x - x̄)² / Sxx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub t_crit: f64,
    pub residual_std: f64,
    pub n: usize,
    pub x_mean: f64,
    pub sxx: f64,
}

impl ConfidenceBand {
    pub fn half_width(&self, x: f64) -> f64 {
        self.t_crit * self.residual_std * (1.0 / self.n as f64 + (x - self.x_mean).powi(2) / self.sxx).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Two-sided p-value of the slope t-test with `n - 2` df.
    pub p_value: f64,
    pub slope_se: f64,
    pub ci95_band: ConfidenceBand,
    pub n: usize,
}

impl RegressionResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// `(lower, upper)` of the 95% band of the mean at `x`.
    pub fn band(&self, x: f64) -> (f64, f64) {
        let (y, h) = (self.predict(x), self.ci95_band.half_width(x));
        (y - h, y + h)
    }

    pub fn slope_ci95(&self) -> (f64, f64) {
        let h = self.ci95_band.t_crit * self.slope_se;
        (self.slope - h, self.slope + h)
    }
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionResult, StatsError> {
    let n = x.len();
    if y.len() != n {
        return Err(StatsError::Parameter(format!("x has {n} values, y has {}", y.len())));
    }
    if n < 3 {
        return Err(StatsError::Parameter(format!("regression needs at least 3 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::Parameter("non-finite regression input".into()));
    }
    let nf = n as f64;
    let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(StatsError::Parameter("x is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 0.0 };
    let df = nf - 2.0;
    let s = (ss_res / df).sqrt();
    let slope_se = s / sxx.sqrt();
    let p_value = if slope == 0.0 {
        1.0
    } else if slope_se == 0.0 {
        f64::MIN_POSITIVE
    } else {
        let t = slope / slope_se;
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).clamp(f64::MIN_POSITIVE, 1.0)
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared,
        p_value,
        slope_se,
        ci95_band: ConfidenceBand { t_crit: t_quantile(0.975, df), residual_std: s, n, x_mean: mx, sxx },
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantiles_match_tables() {
        // two-sided 95% critical values
        for (df, q) in [(1.0, 12.706204736174705), (10.0, 2.228138851986274), (30.0, 2.042272456301238)] {
            assert!((t_quantile(0.975, df) - q).abs() < 1e-8, "df {df}: {}", t_quantile(0.975, df));
        }
        assert!((t_quantile(0.995, 5.0) - 4.032142983557536).abs() < 1e-8);
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_subjects(&[0.2, 0.3]).unwrap();
        assert!((a.mean - 0.25).abs() < 1e-15);
        assert!((a.std.unwrap() - 0.1 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(aggregate_subjects(&[0.4, 0.4, 0.4]).unwrap().std, Some(0.0));
        assert_eq!(aggregate_subjects(&[0.4]).unwrap().std, None);
        assert!(aggregate_subjects(&[]).is_err());
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = ols_fit(&x, &y).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-14);
        assert!((r.intercept - 1.0).abs() < 1e-14);
        assert!((r.r_squared - 1.0).abs() < 1e-14);
        assert!(r.p_value > 0.0 && r.p_value < 1e-10);
        assert!(ols_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(ols_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn textbook_regression() {
        // Sxx = 10, Sxy = 9, Syy = 10: slope 0.9, intercept 0.3, SSres = 1.9
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 3.0, 2.0, 4.0, 5.0];
        let r = ols_fit(&x, &y).unwrap();
        assert!((r.slope - 0.9).abs() < 1e-14);
        assert!((r.intercept - 0.3).abs() < 1e-14);
        assert!((r.r_squared - 0.81).abs() < 1e-14);
        let s = (1.9f64 / 3.0).sqrt();
        assert!((r.slope_se - s / 10f64.sqrt()).abs() < 1e-14);
        let hw = t_quantile(0.975, 3.0) * s * 0.2f64.sqrt();
        assert!((r.ci95_band.half_width(3.0) - hw).abs() < 1e-14);
        // t = 0.9 / se = 3.5762..., two-sided p with 3 df
        assert!((r.p_value - 0.03738607346849863).abs() < 1e-10, "{}", r.p_value);
    }

    #[test]
    fn empirical_p_bounds() {
        let null = NullDistribution::new(vec![0.0; 200], 0, "x").unwrap();
        assert!((null.empirical_p(1.0) - 1.0 / 201.0).abs() < 1e-15);
        assert!((null.empirical_p(-1.0) - 1.0).abs() < 1e-15);
        assert!(NullDistribution::new(vec![], 0, "x").is_err());
    }

    #[test]
    fn huge_effect_is_significant() {
        let mut r = StreamRng::new(1);
        let null = NullDistribution::new((0..200).map(|_| 0.01 * r.normal()).collect(), 1, "x").unwrap();
        let folds = [0.5, 0.501, 0.499, 0.5005, 0.4995];
        let s = significance_test(&folds, &null).unwrap();
        assert!(s.p.unwrap() < 1e-4);
        assert!((s.empirical_p - 1.0 / 201.0).abs() < 1e-15);
    }

    #[test]
    fn constant_fold_scores_are_degenerate() {
        let null = NullDistribution::new(vec![0.0, 0.01, -0.01], 0, "x").unwrap();
        let s = significance_test(&[0.5; 5], &null).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.p, None);
        assert!((s.empirical_p - 0.25).abs() < 1e-15);
        assert!(significance_test(&[0.5], &null).is_err());
    }
}
