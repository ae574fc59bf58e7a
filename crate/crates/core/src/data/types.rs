use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;

use super::DataError;

/// Epoched EEG: `n_trials × n_channels × n_times`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegEpochs {
    data: Vec<f64>,
    n_trials: usize,
    n_channels: usize,
    n_times: usize,
    channel_names: Vec<String>,
    sfreq: f64,
    t_start_ms: f64,
    t_end_ms: f64,
    stimulus_ids: Vec<String>,
    repetition_index: Vec<u32>,
}

/// Number of samples an epoch `[t_start_ms, t_end_ms)` holds at `sfreq`.
pub fn expected_n_times(sfreq: f64, t_start_ms: f64, t_end_ms: f64) -> usize {
    ((t_end_ms - t_start_ms) / 1000.0 * sfreq).round().max(0.0) as usize
}

impl EegEpochs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        data: Vec<f64>,
        shape: [usize; 3],
        channel_names: Vec<String>,
        sfreq: f64,
        t_start_ms: f64,
        t_end_ms: f64,
        stimulus_ids: Vec<String>,
        repetition_index: Vec<u32>,
    ) -> Result<Self, DataError> {
        let [n_trials, n_channels, n_times] = shape;
        if data.len() != n_trials * n_channels * n_times {
            return Err(DataError::Invariant(format!("EEG data holds {} values but shape is {shape:?}", data.len())));
        }
        if channel_names.len() != n_channels {
            return Err(DataError::Invariant(format!(
                "{} channel names for {n_channels} channels",
                channel_names.len()
            )));
        }
        if stimulus_ids.len() != n_trials || repetition_index.len() != n_trials {
            return Err(DataError::Invariant(format!(
                "{n_trials} trials but {} stimulus ids and {} repetition indices",
                stimulus_ids.len(),
                repetition_index.len()
            )));
        }
        if !(sfreq.is_finite() && sfreq > 0.0) {
            return Err(DataError::Invariant(format!("sampling rate {sfreq} must be positive")));
        }
        if !(t_start_ms.is_finite() && t_end_ms.is_finite() && t_end_ms > t_start_ms) {
            return Err(DataError::Invariant(format!("epoch window [{t_start_ms}, {t_end_ms}] ms is empty")));
        }
        let expected = expected_n_times(sfreq, t_start_ms, t_end_ms);
        if expected != n_times {
            return Err(DataError::Invariant(format!(
                "{n_times} time samples but [{t_start_ms}, {t_end_ms}] ms at {sfreq} Hz implies {expected}"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invariant(format!("non-finite EEG value at flat index {i}")));
        }
        Ok(Self {
            data,
            n_trials,
            n_channels,
            n_times,
            channel_names,
            sfreq,
            t_start_ms,
            t_end_ms,
            stimulus_ids,
            repetition_index,
        })
    }

    /// Same metadata, new trial set. Used by transforms that keep the time axis.
    pub(crate) fn with_trials(&self, data: Vec<f64>, stimulus_ids: Vec<String>, repetition_index: Vec<u32>) -> Self {
        debug_assert_eq!(data.len(), stimulus_ids.len() * self.n_channels * self.n_times);
        Self {
            n_trials: stimulus_ids.len(),
            data,
            stimulus_ids,
            repetition_index,
            channel_names: self.channel_names.clone(),
            ..*self
        }
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }
    pub fn n_times(&self) -> usize {
        self.n_times
    }
    pub fn shape(&self) -> [usize; 3] {
        [self.n_trials, self.n_channels, self.n_times]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }
    pub fn sfreq(&self) -> f64 {
        self.sfreq
    }
    pub fn t_start_ms(&self) -> f64 {
        self.t_start_ms
    }
    pub fn t_end_ms(&self) -> f64 {
        self.t_end_ms
    }
    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }
    pub fn repetition_index(&self) -> &[u32] {
        &self.repetition_index
    }

    /// Channel-major block (`n_channels × n_times`) of one trial.
    pub fn trial(&self, trial: usize) -> &[f64] {
        let len = self.n_channels * self.n_times;
        &self.data[trial * len..(trial + 1) * len]
    }

    pub fn series(&self, trial: usize, channel: usize) -> &[f64] {
        let start = (trial * self.n_channels + channel) * self.n_times;
        &self.data[start..start + self.n_times]
    }

    pub fn get(&self, trial: usize, channel: usize, time: usize) -> f64 {
        self.data[(trial * self.n_channels + channel) * self.n_times + time]
    }

    /// Onset time of sample `index`, in ms.
    pub fn sample_time_ms(&self, index: usize) -> f64 {
        self.t_start_ms + index as f64 * 1000.0 / self.sfreq
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }
}

/// Layer-wise model features: `n_stimuli × n_layers × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    data: Vec<f64>,
    n_stimuli: usize,
    n_layers: usize,
    dim: usize,
    model_id: String,
    layer_names: Vec<String>,
    stimulus_ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureTensor {
    pub fn new(
        data: Vec<f64>,
        shape: [usize; 3],
        model_id: impl Into<String>,
        layer_names: Vec<String>,
        stimulus_ids: Vec<String>,
    ) -> Result<Self, DataError> {
        let [n_stimuli, n_layers, dim] = shape;
        if data.len() != n_stimuli * n_layers * dim {
            return Err(DataError::Invariant(format!(
                "feature data holds {} values but shape is {shape:?}",
                data.len()
            )));
        }
        if n_layers == 0 || dim == 0 {
            return Err(DataError::Invariant("features need at least one layer and dimension".into()));
        }
        if layer_names.len() != n_layers {
            return Err(DataError::Invariant(format!("{} layer names for {n_layers} layers", layer_names.len())));
        }
        if stimulus_ids.len() != n_stimuli {
            return Err(DataError::Invariant(format!(
                "{} stimulus ids for {n_stimuli} feature rows",
                stimulus_ids.len()
            )));
        }
        if let Some(dup) = first_duplicate(&stimulus_ids) {
            return Err(DataError::DuplicateId(dup.to_string()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invariant(format!("non-finite feature value at flat index {i}")));
        }
        let index = stimulus_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { data, n_stimuli, n_layers, dim, model_id: model_id.into(), layer_names, stimulus_ids, index })
    }

    pub fn n_stimuli(&self) -> usize {
        self.n_stimuli
    }
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn shape(&self) -> [usize; 3] {
        [self.n_stimuli, self.n_layers, self.dim]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn model_id(&self) -> &str {
        &self.model_id
    }
    pub fn layer_names(&self) -> &[String] {
        &self.layer_names
    }
    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    pub fn row_of(&self, stimulus_id: &str) -> Option<usize> {
        self.index.get(stimulus_id).copied()
    }

    pub fn vector(&self, row: usize, layer: usize) -> &[f64] {
        let start = (row * self.n_layers + layer) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Stimulus ids from `ids` missing from this tensor, in input order.
    pub fn missing_ids<'a>(&self, ids: &'a [String]) -> Vec<&'a str> {
        let mut seen = HashSet::new();
        ids.iter()
            .filter(|id| !self.index.contains_key(id.as_str()) && seen.insert(id.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Rows for `ids` (in that order) of one layer, as an `ids.len() × dim` matrix.
    pub fn layer_matrix(&self, layer: usize, ids: &[String]) -> Result<DMatrix<f64>, DataError> {
        let rows = self.resolve(ids)?;
        Ok(DMatrix::from_fn(rows.len(), self.dim, |i, j| self.vector(rows[i], layer)[j]))
    }

    /// All layers concatenated per stimulus: `ids.len() × (n_layers · dim)`.
    pub fn concat_matrix(&self, ids: &[String]) -> Result<DMatrix<f64>, DataError> {
        let rows = self.resolve(ids)?;
        let width = self.n_layers * self.dim;
        Ok(DMatrix::from_fn(rows.len(), width, |i, j| self.data[rows[i] * width + j]))
    }

    fn resolve(&self, ids: &[String]) -> Result<Vec<usize>, DataError> {
        ids.iter()
            .map(|id| {
                self.row_of(id)
                    .ok_or_else(|| DataError::IdMismatch { model_id: self.model_id.clone(), missing: vec![id.clone()] })
            })
            .collect()
    }
}

pub(crate) fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().map(String::as_str).find(|id| !seen.insert(*id))
}
