//! Epoch and matrix transforms that turn raw tensors into regression inputs.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EegEpochs;

/// Slack used when comparing millisecond bounds against the epoch.
const MS_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("time range error: {0}")]
    Range(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

/// Where fitted transforms (standardization, PCA) get their statistics from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// Fit on the training rows of each fold only.
    #[default]
    TrainFold,
    /// Fit once on all rows before splitting.
    Global,
}

/// Sample indices covered by `[start_ms, end_ms)` of an epoch.
pub fn sample_range(epochs: &EegEpochs, start_ms: f64, end_ms: f64) -> Result<Range<usize>, PreprocessError> {
    let (t0, t1) = (epochs.t_start_ms(), epochs.t_end_ms());
    if !(start_ms >= t0 - MS_EPS && end_ms <= t1 + MS_EPS && start_ms < end_ms) {
        return Err(PreprocessError::Range(format!(
            "window [{start_ms}, {end_ms}] ms is not inside epoch [{t0}, {t1}] ms"
        )));
    }
    let to_index = |t: f64| ((t - t0) * epochs.sfreq() / 1000.0).round().max(0.0) as usize;
    let (a, b) = (to_index(start_ms), to_index(end_ms).min(epochs.n_times()));
    if b <= a {
        return Err(PreprocessError::Range(format!(
            "window [{start_ms}, {end_ms}] ms contains no samples at {} Hz",
            epochs.sfreq()
        )));
    }
    Ok(a..b)
}

/// Averages trials sharing a stimulus id; output order is first appearance.
pub fn average_repetitions(epochs: &EegEpochs) -> EegEpochs {
    let block = epochs.n_channels() * epochs.n_times();
    let mut order: Vec<&str> = Vec::new();
    let mut slots: HashMap<&str, usize> = HashMap::new();
    for id in epochs.stimulus_ids() {
        slots.entry(id.as_str()).or_insert_with(|| {
            order.push(id.as_str());
            order.len() - 1
        });
    }
    let mut sums = vec![0.0; order.len() * block];
    let mut counts = vec![0usize; order.len()];
    for (trial, id) in epochs.stimulus_ids().iter().enumerate() {
        let slot = slots[id.as_str()];
        counts[slot] += 1;
        let dst = &mut sums[slot * block..(slot + 1) * block];
        for (d, s) in dst.iter_mut().zip(epochs.trial(trial)) {
            *d += s;
        }
    }
    for (slot, &count) in counts.iter().enumerate() {
        let inv = 1.0 / count as f64;
        for v in &mut sums[slot * block..(slot + 1) * block] {
            *v *= inv;
        }
    }
    let ids: Vec<String> = order.iter().map(|s| s.to_string()).collect();
    let reps = vec![0; ids.len()];
    epochs.with_trials(sums, ids, reps)
}

/// Subtracts, per trial and channel, the mean over the baseline window.
pub fn baseline_correct(
    epochs: &EegEpochs,
    baseline_start_ms: f64,
    baseline_end_ms: f64,
) -> Result<EegEpochs, PreprocessError> {
    let range = sample_range(epochs, baseline_start_ms, baseline_end_ms)?;
    let nt = epochs.n_times();
    let mut data = epochs.data().to_vec();
    for series in data.chunks_exact_mut(nt) {
        let base = series[range.clone()].iter().sum::<f64>() / range.len() as f64;
        for v in series.iter_mut() {
            *v -= base;
        }
    }
    Ok(epochs.with_trials(data, epochs.stimulus_ids().to_vec(), epochs.repetition_index().to_vec()))
}

/// Flattens a time window to one row per trial.
///
/// Columns are channel-major: all window samples of channel 0, then channel 1, ...
pub fn window_flatten(epochs: &EegEpochs, win_start_ms: f64, win_end_ms: f64) -> Result<DMatrix<f64>, PreprocessError> {
    let range = sample_range(epochs, win_start_ms, win_end_ms)?;
    let w = range.len();
    let nc = epochs.n_channels();
    Ok(DMatrix::from_fn(epochs.n_trials(), nc * w, |i, j| epochs.get(i, j / w, range.start + j % w)))
}

/// Per-trial, per-channel mean amplitude in a window (`n_trials × n_channels`).
pub fn window_means(epochs: &EegEpochs, win_start_ms: f64, win_end_ms: f64) -> Result<DMatrix<f64>, PreprocessError> {
    let range = sample_range(epochs, win_start_ms, win_end_ms)?;
    let inv = 1.0 / range.len() as f64;
    Ok(DMatrix::from_fn(epochs.n_trials(), epochs.n_channels(), |i, c| {
        epochs.series(i, c)[range.clone()].iter().sum::<f64>() * inv
    }))
}

/// Column-wise z-scoring statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerState {
    pub mean: Vec<f64>,
    /// Degenerate (zero-variance) columns are stored with std 1.
    pub std: Vec<f64>,
    pub fitted_on: String,
}

pub fn standardize_fit(x: &DMatrix<f64>) -> Result<StandardizerState, PreprocessError> {
    standardize_fit_on(x, "all rows")
}

pub fn standardize_fit_on(x: &DMatrix<f64>, fitted_on: &str) -> Result<StandardizerState, PreprocessError> {
    let n = x.nrows();
    if n < 2 {
        return Err(PreprocessError::Parameter(format!("standardization needs at least 2 rows, got {n}")));
    }
    let mut mean = Vec::with_capacity(x.ncols());
    let mut std = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s > 1e-12 * (1.0 + m.abs()) { s } else { 1.0 });
    }
    Ok(StandardizerState { mean, std, fitted_on: fitted_on.to_string() })
}

pub fn standardize_apply(state: &StandardizerState, x: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(x.ncols(), state.mean.len(), "standardizer width mismatch");
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (m, s) = (state.mean[j], state.std[j]);
        col.apply(|v| *v = (*v - m) / s);
    }
    out
}

pub fn standardize_inverse(state: &StandardizerState, z: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(z.ncols(), state.mean.len(), "standardizer width mismatch");
    let mut out = z.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (m, s) = (state.mean[j], state.std[j]);
        col.apply(|v| *v = *v * s + m);
    }
    out
}

/// Principal axes of mean-centred data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaState {
    /// `d × k`, orthonormal columns, sorted by decreasing variance.
    pub components: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// PCA through the SVD of the centred data. Requires `1 <= k <= min(n - 1, d)`.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaState, PreprocessError> {
    let (n, d) = x.shape();
    let max_k = n.saturating_sub(1).min(d);
    if k == 0 || k > max_k {
        return Err(PreprocessError::Parameter(format!("PCA needs 1 <= k <= min(n - 1, d) = {max_k}, got k = {k}")));
    }
    let (centered, mean) = crate::linalg::center(x);
    let (_, singular, axes) = crate::linalg::thin_svd(&centered);
    pca_from_svd(mean, &singular, &axes, k)
}

fn pca_from_svd(
    mean: DVector<f64>,
    singular: &[f64],
    axes: &DMatrix<f64>,
    k: usize,
) -> Result<PcaState, PreprocessError> {
    let d = axes.nrows();
    if singular.len() < k {
        return Err(PreprocessError::Parameter(format!(
            "data has numerical rank {}, cannot keep {k} components",
            singular.len()
        )));
    }
    let total: f64 = singular.iter().map(|s| s * s).sum();
    let mut components = DMatrix::zeros(d, k);
    let mut ratio = Vec::with_capacity(k);
    for (c, idx) in (0..k).enumerate() {
        let mut v = axes.column(idx).clone_owned();
        // Sign convention: largest-magnitude loading is positive.
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.neg_mut();
        }
        components.set_column(c, &v);
        ratio.push(if total > 0.0 { singular[idx] * singular[idx] / total } else { 0.0 });
    }
    Ok(PcaState { components, mean, explained_variance_ratio: ratio })
}

/// Fits with `k` clamped to `min(n - 1, d)` and to the numerical rank.
pub fn pca_fit_clamped(x: &DMatrix<f64>, k: usize) -> Result<PcaState, PreprocessError> {
    if k == 0 {
        return Err(PreprocessError::Parameter("PCA needs k >= 1".into()));
    }
    let (centered, mean) = crate::linalg::center(x);
    let (_, singular, axes) = crate::linalg::thin_svd(&centered);
    let k_eff = k.min(x.nrows().saturating_sub(1)).min(singular.len());
    if k_eff == 0 {
        return Err(PreprocessError::Parameter(format!(
            "PCA of a {}x{} matrix with rank {} keeps no component",
            x.nrows(),
            x.ncols(),
            singular.len()
        )));
    }
    if k_eff < k {
        log::debug!("PCA dimensionality {k} clamped to {k_eff} (n = {}, d = {})", x.nrows(), x.ncols());
    }
    pca_from_svd(mean, &singular, &axes, k_eff)
}

pub fn pca_transform(state: &PcaState, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= state.mean.transpose();
    }
    centered * &state.components
}

pub fn pca_inverse(state: &PcaState, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z * state.components.transpose();
    for mut row in out.row_iter_mut() {
        row += state.mean.transpose();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::StreamRng;

    fn epochs(data: Vec<f64>, shape: [usize; 3], ids: &[&str], sfreq: f64, t0: f64, t1: f64) -> EegEpochs {
        let chans = (0..shape[1]).map(|c| format!("C{c}")).collect();
        EegEpochs::new(
            data,
            shape,
            chans,
            sfreq,
            t0,
            t1,
            ids.iter().map(|s| s.to_string()).collect(),
            (0..shape[0] as u32).collect(),
        )
        .unwrap()
    }

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut r = StreamRng::new(seed);
        DMatrix::from_fn(n, d, |_, _| r.normal())
    }

    #[test]
    fn identical_repetitions_average_to_themselves() {
        let trial: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let data: Vec<f64> = trial.iter().cycle().take(24).copied().collect();
        let e = epochs(data, [4, 2, 3], &["a", "a", "a", "a"], 1000.0, 0.0, 3.0);
        let avg = average_repetitions(&e);
        assert_eq!(avg.n_trials(), 1);
        assert_eq!(avg.data(), trial.as_slice());
        assert_eq!(avg.repetition_index(), &[0]);
    }

    #[test]
    fn mean_of_two_repetitions_and_first_appearance_order() {
        let mut data = vec![1.0; 3];
        data.extend([7.0; 3]);
        data.extend([3.0; 3]);
        let e = epochs(data, [3, 1, 3], &["x", "y", "x"], 1000.0, 0.0, 3.0);
        let avg = average_repetitions(&e);
        assert_eq!(avg.stimulus_ids(), &["x".to_string(), "y".to_string()]);
        assert_eq!(avg.series(0, 0), &[2.0, 2.0, 2.0]);
        assert_eq!(avg.series(1, 0), &[7.0, 7.0, 7.0]);
        assert_eq!(average_repetitions(&avg), avg);
    }

    #[test]
    fn baseline_of_constant_signal_is_zero() {
        let e = epochs(vec![3.5; 10], [1, 1, 10], &["a"], 100.0, -50.0, 50.0);
        let c = baseline_correct(&e, -50.0, 0.0).unwrap();
        assert!(c.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_baseline_leaves_signal_unchanged() {
        let mut data = vec![0.0; 5];
        data.extend([5.0; 5]);
        let e = epochs(data.clone(), [1, 1, 10], &["a"], 100.0, -50.0, 50.0);
        let c = baseline_correct(&e, -50.0, 0.0).unwrap();
        assert_eq!(c.data(), data.as_slice());
    }

    #[test]
    fn baseline_outside_epoch_is_range_error() {
        let e = epochs(vec![0.0; 100], [1, 1, 100], &["a"], 100.0, 0.0, 1000.0);
        assert!(matches!(baseline_correct(&e, -200.0, 0.0), Err(PreprocessError::Range(_))));
    }

    #[test]
    fn flatten_layout_is_channel_major() {
        let data: Vec<f64> = (0..2 * 4).map(|v| v as f64).collect();
        let e = epochs(data, [1, 2, 4], &["a"], 1000.0, 0.0, 4.0);
        let m = window_flatten(&e, 1.0, 4.0).unwrap();
        let row: Vec<f64> = m.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 2.0, 3.0, 5.0, 6.0, 7.0]);
        let full = window_flatten(&e, 0.0, 4.0).unwrap();
        assert_eq!(full.ncols(), 8);
    }

    #[test]
    fn hundred_ms_at_100hz_is_ten_samples() {
        let e = epochs(vec![0.0; 3 * 100], [1, 3, 100], &["a"], 100.0, 0.0, 1000.0);
        assert_eq!(sample_range(&e, 100.0, 200.0).unwrap(), 10..20);
        assert_eq!(window_flatten(&e, 100.0, 200.0).unwrap().ncols(), 30);
        assert!(window_flatten(&e, 100.0, 100.0).is_err());
        assert!(window_flatten(&e, 900.0, 1100.0).is_err());
    }

    #[test]
    fn window_prefix_property() {
        let mut r = StreamRng::new(5);
        let data = r.normal_vec(2 * 3 * 50);
        let e = epochs(data, [2, 3, 50], &["a", "b"], 100.0, 0.0, 500.0);
        let short = window_flatten(&e, 0.0, 200.0).unwrap();
        let long = window_flatten(&e, 0.0, 400.0).unwrap();
        for c in 0..3 {
            for t in 0..20 {
                for i in 0..2 {
                    assert_eq!(short[(i, c * 20 + t)], long[(i, c * 40 + t)]);
                }
            }
        }
    }

    #[test]
    fn standardize_unit_column_and_degenerate_column() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 3.0, 4.0]);
        let st = standardize_fit(&x).unwrap();
        let z = standardize_apply(&st, &x);
        let c0 = z.column(0);
        assert!((c0.sum() / 3.0).abs() < 1e-10);
        let var = c0.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var.sqrt() - 1.0).abs() < 1e-8);
        assert!(z.column(1).iter().all(|v| *v == 0.0));
        let back = standardize_inverse(&st, &z);
        assert!((back - x).abs().max() < 1e-12);
    }

    #[test]
    fn standardize_needs_two_rows() {
        assert!(standardize_fit(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn held_out_rows_are_not_exactly_centred() {
        let x = random(60, 4, 11);
        let train = x.rows(0, 40).clone_owned();
        let test = x.rows(40, 20).clone_owned();
        let st = standardize_fit(&train).unwrap();
        let z = standardize_apply(&st, &test);
        for col in z.column_iter() {
            let m = col.sum() / col.len() as f64;
            assert!(m.abs() > 0.0 && m.abs() < 2.0, "held-out mean {m}");
        }
    }

    #[test]
    fn pca_in_two_dimensional_subspace() {
        let basis = random(2, 5, 1);
        let coeffs = random(30, 2, 2);
        let x = &coeffs * &basis;
        let p = pca_fit(&x, 2).unwrap();
        let total: f64 = p.explained_variance_ratio.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        let gram = p.components.transpose() * &p.components;
        assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-8);
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let x = random(20, 6, 3);
        let p = pca_fit(&x, 6).unwrap();
        let back = pca_inverse(&p, &pca_transform(&p, &x));
        assert!((back - &x).abs().max() < 1e-8);
    }

    #[test]
    fn pca_scores_are_uncorrelated_and_ratios_decrease() {
        let x = random(50, 8, 4);
        let p = pca_fit(&x, 5).unwrap();
        let z = pca_transform(&p, &x);
        let cov = z.transpose() * &z / 49.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-8);
                }
            }
        }
        for w in p.explained_variance_ratio.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn pca_wide_data_matches_tall_orientation() {
        let x = random(10, 30, 9);
        let p = pca_fit(&x, 4).unwrap();
        let gram = p.components.transpose() * &p.components;
        assert!((gram - DMatrix::identity(4, 4)).abs().max() < 1e-8);
        assert!(p.explained_variance_ratio.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn pca_rejects_bad_k() {
        let x = random(5, 3, 0);
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&x, 4).is_err());
        assert_eq!(pca_fit_clamped(&x, 256).unwrap().components.ncols(), 3);
    }
}
