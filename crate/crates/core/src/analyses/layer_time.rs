use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{averaged_epochs, model, selected_subjects, AnalysisConfig, AnalysisError};
use crate::data::Dataset;
use crate::encoder::{layer_time_grid_windows, tile_windows, LayerTimeGrid, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectLayerTime {
    pub subject_id: String,
    pub grid: LayerTimeGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTimeResult {
    pub model_id: String,
    pub subjects: Vec<SubjectLayerTime>,
    /// Cell-wise mean over subjects.
    pub mean: LayerTimeGrid,
    /// `(layer, window)` of the largest mean cell.
    pub argmax: (usize, usize),
    pub argmax_layer: String,
    pub argmax_window: Window,
    pub config: AnalysisConfig,
}

/// Layer × window grids per subject, windows tiled at `cfg.window_ms`.
pub fn run_layer_time(
    dataset: &Dataset,
    model_id: &str,
    cfg: &AnalysisConfig,
) -> Result<LayerTimeResult, AnalysisError> {
    run_layer_time_windows(dataset, model_id, None, cfg)
}

/// As [`run_layer_time`], with explicit windows when `windows` is given.
pub fn run_layer_time_windows(
    dataset: &Dataset,
    model_id: &str,
    windows: Option<&[Window]>,
    cfg: &AnalysisConfig,
) -> Result<LayerTimeResult, AnalysisError> {
    cfg.validate()?;
    let features = model(dataset, model_id)?;
    if features.n_layers() < 2 {
        return Err(AnalysisError::Parameter(format!(
            "layer-time analysis needs features with at least 2 layers; model {model_id} has {}",
            features.n_layers()
        )));
    }
    let subjects = selected_subjects(dataset, cfg)?;
    let grids: Vec<SubjectLayerTime> = subjects
        .par_iter()
        .map(|&(_, s)| {
            let run = || -> Result<SubjectLayerTime, AnalysisError> {
                let averaged = averaged_epochs(s, cfg)?;
                let tiled;
                let windows = match windows {
                    Some(w) => w,
                    None => {
                        tiled = tile_windows(&averaged, cfg.window_ms)?;
                        &tiled
                    }
                };
                Ok(SubjectLayerTime {
                    subject_id: s.subject_id.clone(),
                    grid: layer_time_grid_windows(features, &averaged, windows, &cfg.cv)?,
                })
            };
            run().map_err(|e| e.in_subject(&s.subject_id, model_id))
        })
        .collect::<Result<_, _>>()?;
    let all: Vec<LayerTimeGrid> = grids.iter().map(|g| g.grid.clone()).collect();
    let mean = LayerTimeGrid::mean(&all).expect("at least one subject");
    let argmax = mean.argmax();
    Ok(LayerTimeResult {
        model_id: model_id.to_string(),
        argmax_layer: mean.layer_names[argmax.0].clone(),
        argmax_window: mean.windows[argmax.1],
        argmax,
        subjects: grids,
        mean,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::run_alignment;
    use crate::synth::{gen_dataset, SynthSpec};

    #[test]
    fn recovers_planted_cell_and_matches_alignment() {
        let spec = SynthSpec {
            n_stimuli: 100,
            n_channels: 12,
            n_layers: 4,
            dim: 12,
            planted_layer: 3,
            planted_window: (100.0, 200.0),
            snr: 2.0,
            ..Default::default()
        };
        let ds = gen_dataset(&spec).unwrap().into_dataset().unwrap();
        let cfg = AnalysisConfig { n_permutations: 0, ..Default::default() };
        let r = run_layer_time(&ds, "synth", &cfg).unwrap();
        assert_eq!(r.mean.values.len(), 4);
        assert_eq!(r.mean.windows.len(), 5);
        assert_eq!(r.argmax, (3, 1));

        let full = [Window::new(0.0, 500.0)];
        let lt = run_layer_time_windows(&ds, "synth", Some(&full), &cfg).unwrap();
        let al = run_alignment(&ds, "synth", &cfg).unwrap();
        let cell = lt.mean.get(3, 0);
        assert!((cell - al.subjects[0].metrics.pearson.unwrap()).abs() <= 1e-10 * cell.abs().max(1.0));
    }
}
