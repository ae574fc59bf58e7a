use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cv_encode, ChannelTarget, CvConfig, EncoderError};
use crate::data::{EegEpochs, FeatureTensor};
use crate::preprocess;

const TILE_EPS: f64 = 1e-9;

/// Half-open time window `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_ms: f64,
    pub end_ms: f64,
}

impl Window {
    pub fn new(start_ms: f64, end_ms: f64) -> Self {
        Self { start_ms, end_ms }
    }

    pub fn contains(&self, t_ms: f64) -> bool {
        t_ms >= self.start_ms && t_ms < self.end_ms
    }

    pub fn label(&self) -> String {
        format!("{}-{}ms", self.start_ms, self.end_ms)
    }
}

/// Non-overlapping windows of `window_ms` from `max(0, t_start)` to `t_end`.
///
/// A trailing partial window is dropped with a warning.
pub fn tile_windows(epochs: &EegEpochs, window_ms: f64) -> Result<Vec<Window>, EncoderError> {
    if !(window_ms.is_finite() && window_ms > 0.0) {
        return Err(EncoderError::Parameter(format!("window_ms must be > 0, got {window_ms}")));
    }
    let start = epochs.t_start_ms().max(0.0);
    let span = epochs.t_end_ms() - start;
    let count = (span / window_ms + TILE_EPS).floor().max(0.0) as usize;
    if count == 0 {
        return Err(EncoderError::Parameter(format!("post-stimulus span of {span} ms holds no {window_ms} ms window")));
    }
    let leftover = span - count as f64 * window_ms;
    if leftover > TILE_EPS * window_ms.max(1.0) {
        log::warn!("dropping final partial window of {leftover} ms");
    }
    Ok((0..count).map(|i| Window::new(start + i as f64 * window_ms, start + (i + 1) as f64 * window_ms)).collect())
}

/// Cross-validated score per (layer, window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTimeGrid {
    pub layer_names: Vec<String>,
    pub windows: Vec<Window>,
    /// `values[layer][window]`.
    pub values: Vec<Vec<f64>>,
}

impl LayerTimeGrid {
    pub fn get(&self, layer: usize, window: usize) -> f64 {
        self.values[layer][window]
    }

    /// Position of the largest cell; ties keep the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (l, row) in self.values.iter().enumerate() {
            for (w, &v) in row.iter().enumerate() {
                if v > self.values[best.0][best.1] {
                    best = (l, w);
                }
            }
        }
        best
    }

    /// Element-wise mean of grids sharing the same layout.
    pub fn mean(grids: &[LayerTimeGrid]) -> Option<LayerTimeGrid> {
        let first = grids.first()?;
        let mut values = vec![vec![0.0; first.windows.len()]; first.layer_names.len()];
        for g in grids {
            for (acc, row) in values.iter_mut().zip(&g.values) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        let inv = 1.0 / grids.len() as f64;
        values.iter_mut().flatten().for_each(|v| *v *= inv);
        Some(LayerTimeGrid { layer_names: first.layer_names.clone(), windows: first.windows.clone(), values })
    }
}

/// Layer × window grid over windows tiled at `window_ms`.
///
/// Trials sharing a stimulus are averaged first; rows follow first appearance.
pub fn layer_time_grid(
    features: &FeatureTensor,
    epochs: &EegEpochs,
    window_ms: f64,
    cfg: &CvConfig,
) -> Result<LayerTimeGrid, EncoderError> {
    let windows = tile_windows(epochs, window_ms)?;
    layer_time_grid_windows(features, epochs, &windows, cfg)
}

pub fn layer_time_grid_windows(
    features: &FeatureTensor,
    epochs: &EegEpochs,
    windows: &[Window],
    cfg: &CvConfig,
) -> Result<LayerTimeGrid, EncoderError> {
    cfg.validate()?;
    let averaged = preprocess::average_repetitions(epochs);
    let ids = averaged.stimulus_ids();
    let layers: Vec<DMatrix<f64>> =
        (0..features.n_layers()).map(|l| features.layer_matrix(l, ids)).collect::<Result<_, _>>()?;
    let targets: Vec<DMatrix<f64>> = windows
        .iter()
        .map(|w| preprocess::window_flatten(&averaged, w.start_ms, w.end_ms))
        .collect::<Result<_, _>>()?;
    let nw = windows.len();
    let cells: Vec<f64> = (0..layers.len() * nw)
        .into_par_iter()
        .map(|cell| cv_encode(&layers[cell / nw], &targets[cell % nw], cfg).map(|r| r.rho))
        .collect::<Result<_, _>>()?;
    Ok(LayerTimeGrid {
        layer_names: features.layer_names().to_vec(),
        windows: windows.to_vec(),
        values: cells.chunks(nw).map(<[f64]>::to_vec).collect(),
    })
}

/// Cross-validated Pearson r per (channel, window), returned as `n_channels × n_windows`.
///
/// Row `i` of `x` must describe trial `i` of `epochs`.
pub fn channel_window_encode(
    x: &DMatrix<f64>,
    epochs: &EegEpochs,
    windows: &[Window],
    cfg: &CvConfig,
) -> Result<DMatrix<f64>, EncoderError> {
    cfg.validate()?;
    if x.nrows() != epochs.n_trials() {
        return Err(EncoderError::Parameter(format!(
            "X has {} rows but epochs hold {} trials",
            x.nrows(),
            epochs.n_trials()
        )));
    }
    let nc = epochs.n_channels();
    let mut targets = Vec::with_capacity(windows.len());
    for w in windows {
        let range = preprocess::sample_range(epochs, w.start_ms, w.end_ms)?;
        targets.push(range);
    }
    let cells: Vec<f64> = (0..nc * windows.len())
        .into_par_iter()
        .map(|cell| {
            let (c, w) = (cell / windows.len(), cell % windows.len());
            let range = targets[w].clone();
            let y = match cfg.channel_target {
                ChannelTarget::WindowMean => {
                    let inv = 1.0 / range.len() as f64;
                    DMatrix::from_fn(epochs.n_trials(), 1, |i, _| {
                        epochs.series(i, c)[range.clone()].iter().sum::<f64>() * inv
                    })
                }
                ChannelTarget::Flattened => {
                    DMatrix::from_fn(epochs.n_trials(), range.len(), |i, j| epochs.get(i, c, range.start + j))
                }
            };
            cv_encode(x, &y, cfg).map(|r| r.rho)
        })
        .collect::<Result<_, _>>()?;
    Ok(DMatrix::from_row_slice(nc, windows.len(), &cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epochs(t0: f64, t1: f64, sfreq: f64) -> EegEpochs {
        let nt = crate::data::expected_n_times(sfreq, t0, t1);
        EegEpochs::new(
            vec![0.0; 2 * nt],
            [1, 2, nt],
            vec!["Oz".into(), "Cz".into()],
            sfreq,
            t0,
            t1,
            vec!["a".into()],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn tiling_starts_at_zero_and_drops_partial_window() {
        let w = tile_windows(&epochs(-200.0, 800.0, 100.0), 100.0).unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w[0], Window::new(0.0, 100.0));
        assert_eq!(w[7], Window::new(700.0, 800.0));
        let w = tile_windows(&epochs(0.0, 250.0, 100.0), 100.0).unwrap();
        assert_eq!(w.len(), 2);
        assert!(tile_windows(&epochs(0.0, 50.0, 100.0), 100.0).is_err());
        assert!(tile_windows(&epochs(0.0, 50.0, 100.0), 0.0).is_err());
    }

    #[test]
    fn argmax_and_mean() {
        let g = LayerTimeGrid {
            layer_names: vec!["a".into(), "b".into()],
            windows: vec![Window::new(0.0, 1.0), Window::new(1.0, 2.0)],
            values: vec![vec![0.1, 0.2], vec![0.5, 0.3]],
        };
        assert_eq!(g.argmax(), (1, 0));
        let m = LayerTimeGrid::mean(&[g.clone(), g.clone()]).unwrap();
        assert_eq!(m.values, g.values);
        assert!(LayerTimeGrid::mean(&[]).is_none());
    }
}
