use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    averaged_epochs, feature_matrix, mean, model, sample_std, selected_subjects, AnalysisConfig, AnalysisError,
};
use crate::data::{Dataset, Montage, Region};
use crate::encoder::{channel_window_encode, tile_windows, Window};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStat {
    pub mean: f64,
    /// Sample std across the region's channels; `None` for a single channel.
    pub std: Option<f64>,
}

impl RegionStat {
    fn of(values: &[f64]) -> Self {
        Self { mean: mean(values), std: sample_std(values) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: Region,
    pub channels: Vec<String>,
    pub per_window: Vec<RegionStat>,
    /// Over channels of their window-averaged values.
    pub overall: RegionStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTopo {
    pub subject_id: String,
    /// `values[channel][window]`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoResult {
    pub model_id: String,
    pub layers: Vec<String>,
    /// EEG channel order.
    pub channels: Vec<String>,
    pub regions: Vec<Region>,
    pub windows: Vec<Window>,
    /// Subject-mean cross-validated r, `values[channel][window]`.
    pub values: Vec<Vec<f64>>,
    pub subjects: Vec<SubjectTopo>,
    /// Scored regions that have at least one channel, front to back.
    pub region_stats: Vec<RegionSummary>,
    /// Regions by decreasing overall mean.
    pub ranking: Vec<Region>,
    /// Montage entries of the mapped channels, in montage order.
    pub montage: Montage,
    pub config: AnalysisConfig,
}

impl TopoResult {
    pub fn region_stat(&self, region: Region) -> Option<&RegionSummary> {
        self.region_stats.iter().find(|r| r.region == region)
    }
}

/// Channel × window encoding scores with per-region summaries.
///
/// `windows = None` tiles the post-stimulus epoch at `cfg.window_ms`.
pub fn run_topo(
    dataset: &Dataset,
    model_id: &str,
    windows: Option<&[Window]>,
    cfg: &AnalysisConfig,
) -> Result<TopoResult, AnalysisError> {
    cfg.validate()?;
    let montage =
        dataset.montage.as_ref().ok_or_else(|| AnalysisError::Config("topographic analysis needs a montage".into()))?;
    let features = model(dataset, model_id)?;
    let layers = cfg.layer.resolve(features.n_layers())?;
    let subjects = selected_subjects(dataset, cfg)?;
    let channels = subjects[0].1.epochs.channel_names().to_vec();
    let unmapped: Vec<&str> = channels.iter().filter(|c| montage.get(c).is_none()).map(String::as_str).collect();
    if !unmapped.is_empty() {
        log::warn!("channels missing from the montage are treated as Other: {unmapped:?}");
    }
    let regions: Vec<Region> = channels.iter().map(|c| montage.region_of(c)).collect();

    let per_subject: Vec<(SubjectTopo, Vec<Window>)> = subjects
        .par_iter()
        .map(|&(_, s)| {
            let run = || -> Result<(SubjectTopo, Vec<Window>), AnalysisError> {
                let averaged = averaged_epochs(s, cfg)?;
                let windows = match windows {
                    Some(w) => w.to_vec(),
                    None => tile_windows(&averaged, cfg.window_ms)?,
                };
                let x = feature_matrix(features, &layers, averaged.stimulus_ids())?;
                let r = channel_window_encode(&x, &averaged, &windows, &cfg.cv)?;
                let values = r.row_iter().map(|row| row.iter().copied().collect()).collect();
                Ok((SubjectTopo { subject_id: s.subject_id.clone(), values }, windows))
            };
            run().map_err(|e| e.in_subject(&s.subject_id, model_id))
        })
        .collect::<Result<_, _>>()?;
    let windows = per_subject[0].1.clone();
    let subjects: Vec<SubjectTopo> = per_subject.into_iter().map(|(s, _)| s).collect();
    let nw = windows.len();
    let values: Vec<Vec<f64>> = (0..channels.len())
        .map(|c| (0..nw).map(|w| mean(&subjects.iter().map(|s| s.values[c][w]).collect::<Vec<_>>())).collect())
        .collect();

    let mut region_stats = Vec::new();
    for region in Region::SCORED {
        let idx: Vec<usize> = (0..channels.len()).filter(|&c| regions[c] == region).collect();
        if idx.is_empty() {
            log::warn!("no channel maps to the {region} region");
            continue;
        }
        let per_window =
            (0..nw).map(|w| RegionStat::of(&idx.iter().map(|&c| values[c][w]).collect::<Vec<_>>())).collect();
        let channel_means: Vec<f64> = idx.iter().map(|&c| mean(&values[c])).collect();
        region_stats.push(RegionSummary {
            region,
            channels: idx.iter().map(|&c| channels[c].clone()).collect(),
            per_window,
            overall: RegionStat::of(&channel_means),
        });
    }
    let mut ranked: Vec<&RegionSummary> = region_stats.iter().collect();
    ranked.sort_by(|a, b| b.overall.mean.total_cmp(&a.overall.mean));
    let ranking = ranked.iter().map(|r| r.region).collect();

    Ok(TopoResult {
        model_id: model_id.to_string(),
        layers: layers.iter().map(|&l| features.layer_names()[l].clone()).collect(),
        montage: montage.subset(&channels),
        channels,
        regions,
        windows,
        values,
        subjects,
        region_stats,
        ranking,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_dataset, SynthSpec};

    #[test]
    fn occipital_signal_ranks_first() {
        let spec = SynthSpec { n_stimuli: 80, n_layers: 2, dim: 8, planted_layer: 1, snr: 2.0, ..Default::default() };
        let ds = gen_dataset(&spec).unwrap().into_dataset().unwrap();
        let r = run_topo(&ds, "synth", None, &AnalysisConfig::default()).unwrap();
        assert_eq!(r.ranking[0], Region::Occipital);
        assert_eq!(r.values.len(), 16);
        assert_eq!(r.windows.len(), 5);
        for rs in &r.region_stats {
            let idx: Vec<usize> = rs.channels.iter().map(|c| r.channels.iter().position(|x| x == c).unwrap()).collect();
            let m = idx.iter().map(|&c| r.values[c].iter().sum::<f64>() / 5.0).sum::<f64>() / idx.len() as f64;
            assert!((m - rs.overall.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_montage_is_config_error() {
        let spec = SynthSpec { n_stimuli: 30, ..Default::default() };
        let mut ds = gen_dataset(&spec).unwrap().into_dataset().unwrap();
        ds.montage = None;
        assert!(matches!(run_topo(&ds, "synth", None, &AnalysisConfig::default()), Err(AnalysisError::Config(_))));
    }
}
