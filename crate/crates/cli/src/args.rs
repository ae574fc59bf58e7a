use std::cmp::Ordering;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neuralign::analyses::{CategoryMode, ExportFormat, MetricPooling};
use neuralign::encoder::{log_grid, ChannelTarget, CvConfig, ScoreMode, DEFAULT_PCA_DIM};
use neuralign::{AnalysisConfig, FitScope, LayerSelector, Window};

/// Compare network features with EEG responses through ridge encoding models.
#[derive(Debug, Parser)]
#[command(name = "neuralign", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (default: all cores). `--jobs 1` is bitwise reproducible.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Report errors on stderr as one JSON object.
    #[arg(long, global = true)]
    pub json_errors: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest and every file it references; prints one line per issue.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Print issues as a JSON array instead of tab-separated lines.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic dataset (manifest, NPY tensors, side files) with a planted effect.
    Synth(SynthArgs),
    /// Five-metric alignment battery with permutation significance.
    Align(AlignArgs),
    /// Encoding score for every (layer, time window) pair.
    LayerTime(LayerTimeArgs),
    /// Per-channel, per-window encoding scores and region summaries.
    Topo(TopoArgs),
    /// Encoding scores restricted to stimulus categories.
    Category(CategoryArgs),
    /// Regress benchmark scores on model similarity across alignment reports.
    BenchmarkCorr(BenchmarkArgs),
    /// Export predicted and observed RDMs.
    Rdm(RdmArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "NEURALIGN_OUT", default_value = "neuralign_out")]
    pub out: PathBuf,

    /// Output formats, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "json")]
    pub format: Vec<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ExportFormat::Json,
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Svg => ExportFormat::Svg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    TrainFold,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModeArg {
    PerColumn,
    Flattened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelTargetArg {
    WindowMean,
    Flattened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Pooled,
    PerFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Global,
    Refit,
}

/// Dataset selection and encoder settings shared by the analysis commands.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Restrict to these subjects (repeatable).
    #[arg(long = "subject", value_name = "ID")]
    pub subjects: Vec<String>,

    /// Seed for fold assignment and permutations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Outer cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub k_folds: usize,

    /// Smallest ridge penalty of the log-spaced grid.
    #[arg(long, default_value_t = 1e-2)]
    pub alpha_min: f64,

    /// Largest ridge penalty of the log-spaced grid.
    #[arg(long, default_value_t = 1e3)]
    pub alpha_max: f64,

    /// Number of grid points.
    #[arg(long, default_value_t = 20)]
    pub alpha_points: usize,

    /// Where standardization and PCA are fitted.
    #[arg(long, value_enum, default_value = "train-fold")]
    pub fit_scope: ScopeArg,

    /// EEG PCA dimensionality; 0 disables.
    #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
    pub pca: usize,

    /// Feature PCA dimensionality; off when omitted.
    #[arg(long)]
    pub feature_pca: Option<usize>,

    /// Skip z-scoring of features and responses.
    #[arg(long)]
    pub no_standardize: bool,

    /// Layer(s) to encode from: `final`, `all`, or a 0-based index.
    #[arg(long, default_value = "final")]
    pub layer: LayerSelector,

    /// Baseline window `START,END` in ms subtracted before averaging repetitions.
    #[arg(long, allow_hyphen_values = true, value_name = "START,END", value_parser = parse_baseline)]
    pub baseline_ms: Option<(f64, f64)>,

    /// Width of the tiled time windows.
    #[arg(long, default_value_t = 100.0)]
    pub window_ms: f64,

    /// Fold score: mean per-column Pearson r, or r of the flattened matrices.
    #[arg(long, value_enum, default_value = "per-column")]
    pub score_mode: ScoreModeArg,

    /// Per-channel target in topographic runs.
    #[arg(long, value_enum, default_value = "window-mean")]
    pub channel_target: ChannelTargetArg,
}

impl RunArgs {
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            cv: CvConfig {
                k_folds: self.k_folds,
                alpha_grid: log_grid(self.alpha_min, self.alpha_max, self.alpha_points),
                rng_seed: self.seed,
                fit_scope: match self.fit_scope {
                    ScopeArg::TrainFold => FitScope::TrainFold,
                    ScopeArg::Global => FitScope::Global,
                },
                standardize: !self.no_standardize,
                target_pca: (self.pca > 0).then_some(self.pca),
                feature_pca: self.feature_pca,
                score_mode: match self.score_mode {
                    ScoreModeArg::PerColumn => ScoreMode::PerColumn,
                    ScoreModeArg::Flattened => ScoreMode::Flattened,
                },
                channel_target: match self.channel_target {
                    ChannelTargetArg::WindowMean => ChannelTarget::WindowMean,
                    ChannelTargetArg::Flattened => ChannelTarget::Flattened,
                },
            },
            layer: self.layer,
            permutation_seed: self.seed,
            baseline_ms: self.baseline_ms,
            window_ms: self.window_ms,
            subjects: self.subjects.clone(),
            ..AnalysisConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synth spec; omitted fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Override the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Tensor dtype on disk.
    #[arg(long, value_enum, default_value = "f4")]
    pub dtype: DtypeArg,

    /// Output directory.
    #[arg(long, env = "NEURALIGN_OUT", default_value = "neuralign_out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F4,
    F8,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Models to evaluate (repeatable); all models when omitted.
    #[arg(long = "model", value_name = "ID")]
    pub models: Vec<String>,

    /// Shuffles per subject for the permutation null; 0 skips significance.
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,

    /// Whether Spearman, CKA and the RDM metrics use pooled out-of-fold predictions or per-fold averages.
    #[arg(long, value_enum, default_value = "pooled")]
    pub metric_pooling: PoolingArg,

    #[command(flatten)]
    pub output: OutputArgs,
}

impl AlignArgs {
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            n_permutations: self.permutations,
            metric_pooling: match self.metric_pooling {
                PoolingArg::Pooled => MetricPooling::Pooled,
                PoolingArg::PerFold => MetricPooling::PerFold,
            },
            ..self.run.config()
        }
    }
}

#[derive(Debug, Args)]
pub struct LayerTimeArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Model to evaluate; required when the dataset has several.
    #[arg(long)]
    pub model: Option<String>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TopoArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Model to evaluate; required when the dataset has several.
    #[arg(long)]
    pub model: Option<String>,

    /// Explicit windows `START-END` in ms, comma separated; tiled at --window-ms otherwise.
    #[arg(long, value_delimiter = ',', value_parser = parse_window)]
    pub windows: Option<Vec<Window>>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CategoryArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Model to evaluate; required when the dataset has several.
    #[arg(long)]
    pub model: Option<String>,

    /// Category CSV (`stimulus_id,category`); defaults to the manifest's labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,

    /// `global` scores category subsets of pooled predictions; `refit` fits one model per category.
    #[arg(long, value_enum, default_value = "global")]
    pub mode: ModeArg,

    /// Categories with fewer stimuli are reported but not scored.
    #[arg(long, default_value_t = 5)]
    pub min_n: usize,

    #[command(flatten)]
    pub output: OutputArgs,
}

impl CategoryArgs {
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            min_category_n: self.min_n,
            category_mode: match self.mode {
                ModeArg::Global => CategoryMode::Global,
                ModeArg::Refit => CategoryMode::Refit,
            },
            ..self.run.config()
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Alignment report JSON files, one per model.
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,

    /// Benchmark CSV (`model_id,task,score`).
    #[arg(long)]
    pub scores: PathBuf,

    /// Similarity metric used as the regressor.
    #[arg(long, default_value = "pearson")]
    pub metric: String,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RdmArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Model to evaluate; required when the dataset has several.
    #[arg(long)]
    pub model: Option<String>,

    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_window(s: &str) -> Result<Window, String> {
    let (a, b) =
        s.split_once('-').filter(|(a, _)| !a.is_empty()).ok_or_else(|| format!("expected START-END, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start in {s:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad window end in {s:?}"))?;
    if a.partial_cmp(&b) != Some(Ordering::Less) {
        return Err(format!("window {s:?} must have START < END"));
    }
    Ok(Window::new(a, b))
}

fn parse_baseline(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected START,END, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad baseline start in {s:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad baseline end in {s:?}"))?;
    if a.partial_cmp(&b) != Some(Ordering::Less) {
        return Err(format!("baseline {s:?} must have START < END"));
    }
    Ok((a, b))
}
