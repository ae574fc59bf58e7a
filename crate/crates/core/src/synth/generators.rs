use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::StreamRng;
use crate::data::{
    expected_n_times, CategoryLabels, DataError, Dataset, DatasetParts, Dtype, EegEpochs, FeatureTensor, Montage,
    Region, Subject,
};
use crate::preprocess;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// `(X, Y, B)` with `Y = XB + noise`.
///
/// `X` is standard normal and each column of `B` has unit norm, so every
/// column of `XB` has unit variance. Noise variance is `1 / snr`; `snr = 0`
/// yields unit-variance noise with no signal and `snr = inf` yields no noise.
pub fn gen_linear_dataset(
    n: usize,
    d_in: usize,
    d_out: usize,
    snr: f64,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = StreamRng::new(seed);
    let x = DMatrix::from_row_slice(n, d_in, &rng.normal_vec(n * d_in));
    let mut b = DMatrix::from_row_slice(d_in, d_out, &rng.normal_vec(d_in * d_out));
    for mut col in b.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let noise = DMatrix::from_row_slice(n, d_out, &rng.normal_vec(n * d_out));
    let y = if snr == 0.0 { noise } else { &x * &b + noise * (1.0 / snr).sqrt() };
    (x, y, b)
}

/// A stimulus category with its own signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCategory {
    pub name: String,
    pub snr: f64,
}

/// Layout of a synthetic EEG + feature dataset with one planted effect.
///
/// Channels are taken evenly spaced from the bundled 10-10 montage. The signal
/// lives on `planted_channels` (or, when that is empty, on every selected
/// channel of `planted_region`) during `planted_window`, and is a random
/// unit-norm readout of the `planted_layer` features scaled to `snr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_stimuli: usize,
    pub n_channels: usize,
    pub sfreq: f64,
    pub epoch_ms: f64,
    pub t_start_ms: f64,
    pub n_layers: usize,
    pub dim: usize,
    /// Signal power over noise power on planted samples of a single trial.
    pub snr: f64,
    pub planted_layer: usize,
    pub planted_window: (f64, f64),
    pub planted_channels: Vec<String>,
    pub planted_region: Option<Region>,
    pub n_repetitions: usize,
    pub n_subjects: usize,
    pub model_id: String,
    /// Stimuli are assigned round-robin; each category overrides `snr`.
    pub categories: Vec<SynthCategory>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_stimuli: 200,
            n_channels: 16,
            sfreq: 100.0,
            epoch_ms: 500.0,
            t_start_ms: 0.0,
            n_layers: 6,
            dim: 32,
            snr: 2.0,
            planted_layer: 3,
            planted_window: (100.0, 200.0),
            planted_channels: Vec::new(),
            planted_region: Some(Region::Occipital),
            n_repetitions: 4,
            n_subjects: 1,
            model_id: "synth".into(),
            categories: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn t_end_ms(&self) -> f64 {
        self.t_start_ms + self.epoch_ms
    }

    pub fn stimulus_ids(&self) -> Vec<String> {
        (0..self.n_stimuli).map(|i| format!("stim_{i:05}")).collect()
    }

    pub fn layer_names(&self) -> Vec<String> {
        (0..self.n_layers).map(|l| format!("layer_{l}")).collect()
    }

    /// The montage restricted to the selected channels.
    pub fn montage(&self) -> Montage {
        let full = Montage::standard_10_20();
        let names: Vec<String> =
            (0..self.n_channels).map(|i| full.entries()[i * full.len() / self.n_channels].channel.clone()).collect();
        full.subset(&names)
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.montage().entries().iter().map(|e| e.channel.clone()).collect()
    }

    /// Channels carrying the planted signal, in montage order.
    pub fn resolved_planted_channels(&self) -> Vec<String> {
        let montage = self.montage();
        montage
            .entries()
            .iter()
            .filter(|e| {
                if self.planted_channels.is_empty() {
                    self.planted_region == Some(e.region)
                } else {
                    self.planted_channels.contains(&e.channel)
                }
            })
            .map(|e| e.channel.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if self.n_stimuli < 2 || self.n_layers == 0 || self.dim == 0 {
            return bad("need n_stimuli >= 2, n_layers >= 1 and dim >= 1".into());
        }
        if self.n_channels == 0 || self.n_channels > Montage::standard_10_20().len() {
            return bad(format!("n_channels must be in 1..=64, got {}", self.n_channels));
        }
        if self.n_repetitions == 0 || self.n_subjects == 0 {
            return bad("n_repetitions and n_subjects must be >= 1".into());
        }
        if !(self.sfreq > 0.0 && self.sfreq.is_finite() && self.epoch_ms > 0.0 && self.epoch_ms.is_finite()) {
            return bad("sfreq and epoch_ms must be positive".into());
        }
        if expected_n_times(self.sfreq, self.t_start_ms, self.t_end_ms()) == 0 {
            return bad("epoch holds no samples".into());
        }
        let bad_snr = |v: f64| v.is_nan() || v < 0.0;
        if bad_snr(self.snr) || self.categories.iter().any(|c| bad_snr(c.snr)) {
            return bad("snr must be >= 0".into());
        }
        if self.planted_layer >= self.n_layers {
            return bad(format!("planted_layer {} out of range for {} layers", self.planted_layer, self.n_layers));
        }
        let (a, b) = self.planted_window;
        if !(a >= self.t_start_ms && b <= self.t_end_ms() && a < b) {
            return bad(format!("planted window ({a}, {b}) is outside the epoch"));
        }
        let names = self.channel_names();
        if let Some(c) = self.planted_channels.iter().find(|c| !names.contains(c)) {
            return bad(format!("planted channel {c} is not among the selected channels {names:?}"));
        }
        if self.resolved_planted_channels().is_empty() {
            return bad("no channel carries the planted signal".into());
        }
        Ok(())
    }

    fn stimulus_snr(&self, stimulus: usize) -> f64 {
        if self.categories.is_empty() {
            self.snr
        } else {
            self.categories[stimulus % self.categories.len()].snr
        }
    }

    /// Round-robin category labels, if categories are configured.
    pub fn category_labels(&self) -> Option<CategoryLabels> {
        if self.categories.is_empty() {
            return None;
        }
        let labels: BTreeMap<String, String> = self
            .stimulus_ids()
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, self.categories[i % self.categories.len()].name.clone()))
            .collect();
        Some(CategoryLabels::new(labels, None).expect("labels use only their own categories"))
    }
}

/// Random standard-normal features, one independent block per layer.
pub fn gen_features(spec: &SynthSpec) -> Result<FeatureTensor, SynthError> {
    spec.validate()?;
    let mut rng = StreamRng::derived(spec.seed, 0);
    let data = rng.normal_vec(spec.n_stimuli * spec.n_layers * spec.dim);
    Ok(FeatureTensor::new(
        data,
        [spec.n_stimuli, spec.n_layers, spec.dim],
        spec.model_id.clone(),
        spec.layer_names(),
        spec.stimulus_ids(),
    )?)
}

/// Epochs of the first subject plus the feature tensor they were generated from.
pub fn gen_structured_epochs(
    spec: &SynthSpec,
    features: Option<&FeatureTensor>,
) -> Result<(EegEpochs, FeatureTensor), SynthError> {
    let features = match features {
        Some(f) => f.clone(),
        None => gen_features(spec)?,
    };
    let epochs = gen_subject_epochs(spec, &features, 0)?;
    Ok((epochs, features))
}

/// Epochs of subject `subject`. Trials are ordered repetition-major.
///
/// Subjects share the features but draw their own readout and noise.
pub fn gen_subject_epochs(spec: &SynthSpec, features: &FeatureTensor, subject: usize) -> Result<EegEpochs, SynthError> {
    spec.validate()?;
    let ids = spec.stimulus_ids();
    if features.n_layers() <= spec.planted_layer {
        return Err(SynthError::Spec("features have too few layers".into()));
    }
    if let Some(missing) = features.missing_ids(&ids).first() {
        return Err(SynthError::Spec(format!("features lack stimulus {missing}")));
    }
    let channels = spec.channel_names();
    let planted = spec.resolved_planted_channels();
    let (nc, nt, ns) = (channels.len(), expected_n_times(spec.sfreq, spec.t_start_ms, spec.t_end_ms()), ids.len());
    let n_trials = ns * spec.n_repetitions;

    let mut rng = StreamRng::derived(spec.seed, 1 + subject as u64);
    let layer = features.layer_matrix(spec.planted_layer, &ids)?;
    // one unit-norm readout per planted channel; features are unit variance,
    // so the readout has unit variance too
    let mut signal = DMatrix::zeros(ns, nc);
    for (c, name) in channels.iter().enumerate() {
        if planted.contains(name) {
            let mut w = DVector::from_vec(rng.normal_vec(features.dim()));
            w /= w.norm();
            signal.set_column(c, &(&layer * w));
        }
    }

    let mut trial_ids = Vec::with_capacity(n_trials);
    let mut reps = Vec::with_capacity(n_trials);
    for rep in 0..spec.n_repetitions {
        trial_ids.extend(ids.iter().cloned());
        reps.extend((0..ns).map(|_| rep as u32));
    }
    let mut data = rng.normal_vec(n_trials * nc * nt);
    let template = EegEpochs::new(
        vec![0.0; nc * nt],
        [1, nc, nt],
        channels.clone(),
        spec.sfreq,
        spec.t_start_ms,
        spec.t_end_ms(),
        vec![ids[0].clone()],
        vec![0],
    )?;
    let window = preprocess::sample_range(&template, spec.planted_window.0, spec.planted_window.1)
        .map_err(|e| SynthError::Spec(e.to_string()))?;
    for trial in 0..n_trials {
        let stim = trial % ns;
        let amp = spec.stimulus_snr(stim).sqrt();
        for c in 0..nc {
            let s = signal[(stim, c)] * amp;
            if s == 0.0 {
                continue;
            }
            let base = (trial * nc + c) * nt;
            for v in &mut data[base + window.start..base + window.end] {
                *v += s;
            }
        }
    }
    Ok(EegEpochs::new(
        data,
        [n_trials, nc, nt],
        channels,
        spec.sfreq,
        spec.t_start_ms,
        spec.t_end_ms(),
        trial_ids,
        reps,
    )?)
}

/// Everything needed to write a synthetic dataset to disk.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub subjects: Vec<Subject>,
    pub features: FeatureTensor,
    pub montage: Montage,
    pub categories: Option<CategoryLabels>,
}

impl SynthDataset {
    pub fn parts(&self, dtype: Dtype) -> DatasetParts<'_> {
        DatasetParts {
            subjects: &self.subjects,
            models: std::slice::from_ref(&self.features),
            montage: Some(&self.montage),
            categories: self.categories.as_ref(),
            dtype,
        }
    }

    pub fn into_dataset(self) -> Result<Dataset, SynthError> {
        Ok(Dataset::in_memory(self.subjects, vec![self.features], Some(self.montage), self.categories)?)
    }
}

pub fn gen_dataset(spec: &SynthSpec) -> Result<SynthDataset, SynthError> {
    let features = gen_features(spec)?;
    let subjects = (0..spec.n_subjects)
        .map(|s| {
            Ok(Subject { subject_id: format!("sub-{:02}", s + 1), epochs: gen_subject_epochs(spec, &features, s)? })
        })
        .collect::<Result<_, SynthError>>()?;
    Ok(SynthDataset { subjects, features, montage: spec.montage(), categories: spec.category_labels() })
}
