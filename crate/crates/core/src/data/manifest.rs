use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy::{self, NpyArray};
use super::types::{expected_n_times, first_duplicate};
use super::{CategoryLabels, DataError, Dtype, EegEpochs, FeatureTensor, Montage, ValidationIssue};

pub const MANIFEST_VERSION: &str = "1.0";

const TOP_KEYS: &[&str] = &[
    "version",
    "dtype",
    "sfreq",
    "t_start_ms",
    "t_end_ms",
    "channel_names",
    "subjects",
    "features",
    "montage_path",
    "categories_path",
    "categories",
];
const SUBJECT_KEYS: &[&str] = &["subject_id", "eeg_path", "trials_path", "sfreq"];
const FEATURE_KEYS: &[&str] = &["model_id", "path", "stimuli_path", "layer_names"];

/// Dataset manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// `"<f4"` or `"<f8"`, shared by every tensor in the dataset.
    pub dtype: String,
    pub sfreq: f64,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
    pub channel_names: Vec<String>,
    pub subjects: Vec<SubjectEntry>,
    pub features: Vec<FeatureEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montage_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories_path: Option<String>,
    /// Declared category set; defaults to the categories used in the label file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    /// NPY tensor `[n_trials, n_channels, n_times]`.
    pub eeg_path: String,
    /// CSV `stimulus_id,repetition`, one row per trial.
    pub trials_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sfreq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub model_id: String,
    /// NPY tensor `[n_stimuli, n_layers, dim]`.
    pub path: String,
    /// CSV `stimulus_id`, one row per feature row.
    pub stimuli_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub subject_id: String,
    pub epochs: EegEpochs,
}

/// A fully resolved dataset. Only produced when validation finds no issue.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub root: PathBuf,
    pub subjects: Vec<Subject>,
    pub models: Vec<FeatureTensor>,
    pub montage: Option<Montage>,
    pub categories: Option<CategoryLabels>,
}

impl Dataset {
    pub fn model(&self, model_id: &str) -> Option<&FeatureTensor> {
        self.models.iter().find(|m| m.model_id() == model_id)
    }

    pub fn subject(&self, subject_id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.subject_id == subject_id)
    }

    /// A dataset held only in memory. Its manifest references no files.
    pub fn in_memory(
        subjects: Vec<Subject>,
        models: Vec<FeatureTensor>,
        montage: Option<Montage>,
        categories: Option<CategoryLabels>,
    ) -> Result<Self, DataError> {
        let e0 = &check_shared_axis(&subjects)?.epochs;
        let ids: Vec<String> = models.iter().map(|m| m.model_id().to_string()).collect();
        if let Some(dup) = first_duplicate(&ids) {
            return Err(DataError::DuplicateId(dup.to_string()));
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION.to_string(),
            dtype: Dtype::F8.descr().to_string(),
            sfreq: e0.sfreq(),
            t_start_ms: e0.t_start_ms(),
            t_end_ms: e0.t_end_ms(),
            channel_names: e0.channel_names().to_vec(),
            subjects: subjects
                .iter()
                .map(|s| SubjectEntry {
                    subject_id: s.subject_id.clone(),
                    eeg_path: String::new(),
                    trials_path: String::new(),
                    sfreq: None,
                })
                .collect(),
            features: models
                .iter()
                .map(|m| FeatureEntry {
                    model_id: m.model_id().to_string(),
                    path: String::new(),
                    stimuli_path: String::new(),
                    layer_names: Some(m.layer_names().to_vec()),
                })
                .collect(),
            montage_path: None,
            categories_path: None,
            categories: categories.as_ref().map(|c| c.categories().iter().cloned().collect()),
        };
        Ok(Self { manifest, root: PathBuf::new(), subjects, models, montage, categories })
    }
}

/// First subject, after checking every subject shares its time axis and channels.
fn check_shared_axis(subjects: &[Subject]) -> Result<&Subject, DataError> {
    let first = subjects.first().ok_or_else(|| DataError::Invariant("dataset needs at least one subject".into()))?;
    let e0 = &first.epochs;
    for s in subjects {
        let e = &s.epochs;
        if e.sfreq() != e0.sfreq()
            || e.t_start_ms() != e0.t_start_ms()
            || e.t_end_ms() != e0.t_end_ms()
            || e.channel_names() != e0.channel_names()
        {
            return Err(DataError::Invariant(format!(
                "subject {} does not share the dataset's time axis and channels",
                s.subject_id
            )));
        }
    }
    Ok(first)
}

#[derive(Deserialize)]
struct TrialRow {
    stimulus_id: String,
    repetition: u32,
}

#[derive(Deserialize)]
struct StimulusRow {
    stimulus_id: String,
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    match inspect(manifest_path.as_ref())? {
        (Some(ds), issues) if issues.is_empty() => Ok(ds),
        (_, issues) => Err(DataError::Invalid(issues)),
    }
}

/// Lists every issue that would make [`load_dataset`] fail.
///
/// Only an unreadable manifest is an error; everything else is reported.
pub fn validate_manifest(manifest_path: impl AsRef<Path>) -> Result<Vec<ValidationIssue>, DataError> {
    inspect(manifest_path.as_ref()).map(|(_, issues)| issues)
}

struct Inspector {
    root: PathBuf,
    issues: Vec<ValidationIssue>,
}

impl Inspector {
    fn issue(&mut self, code: &str, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue::new(code, location, message));
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn existing(&mut self, rel: &str, location: &str) -> Option<PathBuf> {
        let path = self.resolve(rel);
        if path.is_file() {
            Some(path)
        } else {
            self.issue("MISSING_FILE", location, format!("{location} refers to missing file {}", path.display()));
            None
        }
    }

    fn tensor(&mut self, rel: &str, location: &str, dtype: Option<Dtype>) -> Option<NpyArray> {
        let path = self.existing(rel, location)?;
        let array = match npy::load_npy(&path) {
            Ok(a) => a,
            Err(e) => {
                self.issue(e.code(), location, format!("{}: {e}", path.display()));
                return None;
            }
        };
        let mut ok = true;
        if let Some(d) = dtype {
            if array.dtype != d {
                self.issue(
                    "DTYPE_MISMATCH",
                    location,
                    format!("tensor dtype {} differs from manifest dtype {d}", array.dtype),
                );
                ok = false;
            }
        }
        if array.shape.len() != 3 {
            self.issue("SHAPE_MISMATCH", location, format!("expected a 3-D tensor, found shape {:?}", array.shape));
            ok = false;
        }
        if let Some(i) = array.data.iter().position(|v| !v.is_finite()) {
            self.issue("NON_FINITE", location, format!("non-finite value at flat index {i}"));
            ok = false;
        }
        ok.then_some(array)
    }

    fn csv_rows<T: for<'de> Deserialize<'de>>(&mut self, rel: &str, location: &str) -> Option<Vec<T>> {
        let path = self.existing(rel, location)?;
        let parsed =
            csv::Reader::from_path(&path).and_then(|mut r| r.deserialize::<T>().collect::<Result<Vec<T>, _>>());
        match parsed {
            Ok(rows) => Some(rows),
            Err(e) => {
                self.issue("CSV_PARSE", location, format!("{}: {e}", path.display()));
                None
            }
        }
    }
}

fn warn_unknown_keys(value: &serde_json::Value, known: &[&str], location: &str) {
    if let Some(obj) = value.as_object() {
        for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
            log::warn!("ignoring unknown manifest key {location}{key}");
        }
    }
}

fn inspect(manifest_path: &Path) -> Result<(Option<Dataset>, Vec<ValidationIssue>), DataError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| DataError::io(manifest_path, e))?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut ins = Inspector { root: root.clone(), issues: Vec::new() };

    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            ins.issue("MANIFEST_PARSE", "manifest", format!("not valid JSON: {e}"));
            return Ok((None, ins.issues));
        }
    };
    warn_unknown_keys(&value, TOP_KEYS, "");
    for (key, known) in [("subjects", SUBJECT_KEYS), ("features", FEATURE_KEYS)] {
        if let Some(items) = value.get(key).and_then(|v| v.as_array()) {
            for (i, item) in items.iter().enumerate() {
                warn_unknown_keys(item, known, &format!("{key}[{i}]."));
            }
        }
    }
    let manifest: Manifest = match serde_json::from_value(value) {
        Ok(m) => m,
        Err(e) => {
            ins.issue("MANIFEST_SCHEMA", "manifest", e.to_string());
            return Ok((None, ins.issues));
        }
    };

    if manifest.version != MANIFEST_VERSION {
        log::warn!("manifest version {} (engine writes {MANIFEST_VERSION})", manifest.version);
    }
    let dtype = Dtype::from_descr(&manifest.dtype);
    if dtype.is_none() {
        ins.issue("UNSUPPORTED_DTYPE", "dtype", format!("dtype {:?} is not \"<f4\" or \"<f8\"", manifest.dtype));
    }
    let time_axis_ok = manifest.sfreq.is_finite()
        && manifest.sfreq > 0.0
        && manifest.t_start_ms.is_finite()
        && manifest.t_end_ms > manifest.t_start_ms;
    if !time_axis_ok {
        ins.issue(
            "INVALID_TIME_AXIS",
            "sfreq",
            format!(
                "need sfreq > 0 and t_end_ms > t_start_ms (got {} Hz, [{}, {}] ms)",
                manifest.sfreq, manifest.t_start_ms, manifest.t_end_ms
            ),
        );
    }
    if manifest.subjects.is_empty() {
        ins.issue("EMPTY_DATASET", "subjects", "no subjects listed");
    }
    if manifest.features.is_empty() {
        ins.issue("EMPTY_DATASET", "features", "no feature tensors listed");
    }
    if manifest.channel_names.is_empty() {
        ins.issue("MANIFEST_SCHEMA", "channel_names", "no channel names listed");
    }
    if let Some(dup) = first_duplicate(&manifest.channel_names) {
        ins.issue("DUPLICATE_ID", "channel_names", format!("channel {dup:?} listed twice"));
    }
    let subject_ids: Vec<String> = manifest.subjects.iter().map(|s| s.subject_id.clone()).collect();
    if let Some(dup) = first_duplicate(&subject_ids) {
        ins.issue("DUPLICATE_ID", "subjects", format!("subject {dup:?} listed twice"));
    }
    let model_ids: Vec<String> = manifest.features.iter().map(|f| f.model_id.clone()).collect();
    if let Some(dup) = first_duplicate(&model_ids) {
        ins.issue("DUPLICATE_ID", "features", format!("model {dup:?} listed twice"));
    }

    let n_times = time_axis_ok.then(|| expected_n_times(manifest.sfreq, manifest.t_start_ms, manifest.t_end_ms));

    let mut subjects = Vec::new();
    for (i, entry) in manifest.subjects.iter().enumerate() {
        if let Some(s) = entry.sfreq {
            if s != manifest.sfreq {
                ins.issue(
                    "INCONSISTENT_SFREQ",
                    format!("subjects[{i}].sfreq"),
                    format!("subject {} declares {s} Hz but the dataset is {} Hz", entry.subject_id, manifest.sfreq),
                );
                continue;
            }
        }
        let eeg_loc = format!("subjects[{i}].eeg_path");
        let tensor = ins.tensor(&entry.eeg_path, &eeg_loc, dtype);
        let trials: Option<Vec<TrialRow>> = ins.csv_rows(&entry.trials_path, &format!("subjects[{i}].trials_path"));
        let (Some(tensor), Some(trials), Some(n_times)) = (tensor, trials, n_times) else {
            continue;
        };
        let [n_trials, n_channels, nt] = [tensor.shape[0], tensor.shape[1], tensor.shape[2]];
        let mut ok = true;
        if n_channels != manifest.channel_names.len() {
            ins.issue(
                "SHAPE_MISMATCH",
                &eeg_loc,
                format!("{n_channels} channels in tensor, {} in channel_names", manifest.channel_names.len()),
            );
            ok = false;
        }
        if nt != n_times {
            ins.issue(
                "TIME_AXIS_MISMATCH",
                &eeg_loc,
                format!("{nt} time samples, manifest time axis implies {n_times}"),
            );
            ok = false;
        }
        if trials.len() != n_trials {
            ins.issue(
                "SHAPE_MISMATCH",
                format!("subjects[{i}].trials_path"),
                format!("{} trial rows for {n_trials} trials", trials.len()),
            );
            ok = false;
        }
        if !ok {
            continue;
        }
        let (stimulus_ids, reps) = trials.into_iter().map(|t| (t.stimulus_id, t.repetition)).unzip();
        match EegEpochs::new(
            tensor.data,
            [n_trials, n_channels, nt],
            manifest.channel_names.clone(),
            manifest.sfreq,
            manifest.t_start_ms,
            manifest.t_end_ms,
            stimulus_ids,
            reps,
        ) {
            Ok(epochs) => subjects.push(Subject { subject_id: entry.subject_id.clone(), epochs }),
            Err(e) => ins.issue("INVALID_DATA", eeg_loc, e.to_string()),
        }
    }

    let mut models = Vec::new();
    for (i, entry) in manifest.features.iter().enumerate() {
        let loc = format!("features[{i}].path");
        let tensor = ins.tensor(&entry.path, &loc, dtype);
        let rows: Option<Vec<StimulusRow>> = ins.csv_rows(&entry.stimuli_path, &format!("features[{i}].stimuli_path"));
        let (Some(tensor), Some(rows)) = (tensor, rows) else {
            continue;
        };
        let shape = [tensor.shape[0], tensor.shape[1], tensor.shape[2]];
        let ids: Vec<String> = rows.into_iter().map(|r| r.stimulus_id).collect();
        if ids.len() != shape[0] {
            ins.issue(
                "SHAPE_MISMATCH",
                format!("features[{i}].stimuli_path"),
                format!("{} stimulus rows for {} feature rows", ids.len(), shape[0]),
            );
            continue;
        }
        if let Some(dup) = first_duplicate(&ids) {
            ins.issue(
                "DUPLICATE_ID",
                format!("features[{i}].stimuli_path"),
                format!("stimulus id {dup:?} appears more than once for model {}", entry.model_id),
            );
            continue;
        }
        let layer_names =
            entry.layer_names.clone().unwrap_or_else(|| (0..shape[1]).map(|l| format!("layer_{l}")).collect());
        if layer_names.len() != shape[1] {
            ins.issue(
                "SHAPE_MISMATCH",
                format!("features[{i}].layer_names"),
                format!("{} layer names for {} layers", layer_names.len(), shape[1]),
            );
            continue;
        }
        match FeatureTensor::new(tensor.data, shape, entry.model_id.clone(), layer_names, ids) {
            Ok(f) => models.push(f),
            Err(e) => ins.issue("INVALID_DATA", loc, e.to_string()),
        }
    }

    for subject in &subjects {
        for model in &models {
            let missing = model.missing_ids(subject.epochs.stimulus_ids());
            if !missing.is_empty() {
                let shown: Vec<&str> = missing.iter().take(10).copied().collect();
                ins.issue(
                    "ID_MISMATCH",
                    format!("subjects[{}]", subject.subject_id),
                    format!(
                        "{} stimulus id(s) of subject {} missing from model {}: {}{}",
                        missing.len(),
                        subject.subject_id,
                        model.model_id(),
                        shown.join(", "),
                        if missing.len() > shown.len() { ", ..." } else { "" }
                    ),
                );
            }
        }
    }

    let montage = match &manifest.montage_path {
        Some(rel) => ins.existing(rel, "montage_path").and_then(|p| match Montage::load(&p) {
            Ok(m) => Some(m),
            Err(e) => {
                ins.issue("MONTAGE_INVALID", "montage_path", format!("{}: {e}", p.display()));
                None
            }
        }),
        None => None,
    };

    let categories = match &manifest.categories_path {
        Some(rel) => {
            let declared: Option<BTreeSet<String>> = manifest.categories.as_ref().map(|c| c.iter().cloned().collect());
            ins.existing(rel, "categories_path").and_then(|p| match CategoryLabels::load(&p, declared) {
                Ok(l) => Some(l),
                Err(e) => {
                    let code = match e {
                        DataError::Invariant(_) => "UNKNOWN_CATEGORY",
                        DataError::DuplicateId(_) => "DUPLICATE_ID",
                        _ => "CSV_PARSE",
                    };
                    ins.issue(code, "categories_path", format!("{}: {e}", p.display()));
                    None
                }
            })
        }
        None => None,
    };
    if let Some(labels) = &categories {
        let known: HashSet<&str> = models.iter().flat_map(|m| m.stimulus_ids().iter().map(String::as_str)).collect();
        if !models.is_empty() {
            if let Some((id, _)) = labels.iter().find(|(id, _)| !known.contains(id)) {
                ins.issue(
                    "UNRESOLVED_LABEL",
                    "categories_path",
                    format!("labelled stimulus {id:?} is not in any feature tensor"),
                );
            }
        }
    }

    if !ins.issues.is_empty() {
        return Ok((None, ins.issues));
    }
    let dataset = Dataset { manifest, root, subjects, models, montage, categories };
    Ok((Some(dataset), ins.issues))
}

/// In-memory pieces written by [`save_dataset`].
pub struct DatasetParts<'a> {
    pub subjects: &'a [Subject],
    pub models: &'a [FeatureTensor],
    pub montage: Option<&'a Montage>,
    pub categories: Option<&'a CategoryLabels>,
    pub dtype: Dtype,
}

/// Writes tensors, side files and `manifest.json` into `dir`; returns the manifest path.
pub fn save_dataset(dir: impl AsRef<Path>, parts: &DatasetParts<'_>) -> Result<PathBuf, DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let e0 = &check_shared_axis(parts.subjects)?.epochs;

    let write_npy = |name: &str, shape: [usize; 3], data: &[f64]| -> Result<(), DataError> {
        let path = dir.join(name);
        let array = NpyArray::new(parts.dtype, shape.to_vec(), data.to_vec())
            .map_err(|source| DataError::Npy { path: path.clone(), source })?;
        npy::save_npy(&array, &path).map_err(|source| DataError::Npy { path, source })
    };
    let csv_err = |e: csv::Error| DataError::Csv(e.to_string());

    let mut subjects = Vec::new();
    for s in parts.subjects {
        let eeg_path = format!("{}_eeg.npy", s.subject_id);
        let trials_path = format!("{}_trials.csv", s.subject_id);
        write_npy(&eeg_path, s.epochs.shape(), s.epochs.data())?;
        let mut w = csv::Writer::from_path(dir.join(&trials_path)).map_err(csv_err)?;
        w.write_record(["stimulus_id", "repetition"]).map_err(csv_err)?;
        for (id, rep) in s.epochs.stimulus_ids().iter().zip(s.epochs.repetition_index()) {
            w.write_record([id.as_str(), &rep.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| DataError::io(dir, e))?;
        subjects.push(SubjectEntry { subject_id: s.subject_id.clone(), eeg_path, trials_path, sfreq: None });
    }

    let mut features = Vec::new();
    for m in parts.models {
        let path = format!("features_{}.npy", m.model_id());
        let stimuli_path = format!("features_{}_stimuli.csv", m.model_id());
        write_npy(&path, m.shape(), m.data())?;
        let mut w = csv::Writer::from_path(dir.join(&stimuli_path)).map_err(csv_err)?;
        w.write_record(["stimulus_id"]).map_err(csv_err)?;
        for id in m.stimulus_ids() {
            w.write_record([id]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| DataError::io(dir, e))?;
        features.push(FeatureEntry {
            model_id: m.model_id().to_string(),
            path,
            stimuli_path,
            layer_names: Some(m.layer_names().to_vec()),
        });
    }

    let montage_path = match parts.montage {
        Some(m) => {
            m.save(dir.join("montage.csv"))?;
            Some("montage.csv".to_string())
        }
        None => None,
    };
    let (categories_path, categories) = match parts.categories {
        Some(c) => {
            c.save(dir.join("categories.csv"))?;
            (Some("categories.csv".to_string()), Some(c.categories().iter().cloned().collect()))
        }
        None => (None, None),
    };

    let manifest = Manifest {
        version: MANIFEST_VERSION.to_string(),
        dtype: parts.dtype.descr().to_string(),
        sfreq: e0.sfreq(),
        t_start_ms: e0.t_start_ms(),
        t_end_ms: e0.t_end_ms(),
        channel_names: e0.channel_names().to_vec(),
        subjects,
        features,
        montage_path,
        categories_path,
        categories,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Json(e.to_string()))?;
    fs::write(&manifest_path, json).map_err(|e| DataError::io(&manifest_path, e))?;
    Ok(manifest_path)
}
