use std::fs;

use neuralign::analyses::{
    export_report, run_alignment, run_category, run_layer_time, run_rdm, run_topo, AlignmentReport, ExportFormat,
    LayerTimeResult, MetricPooling, ReportRef, TopoResult,
};
use neuralign::data::{save_dataset, Dtype};
use neuralign::synth::{gen_dataset, SynthCategory};
use neuralign::{load_dataset, validate_manifest, AnalysisConfig, AnalysisError, Dataset, LayerSelector, SynthSpec};

fn spec() -> SynthSpec {
    SynthSpec {
        n_stimuli: 60,
        n_channels: 8,
        n_layers: 3,
        planted_layer: 1,
        dim: 10,
        n_repetitions: 2,
        epoch_ms: 300.0,
        n_subjects: 2,
        snr: 4.0,
        ..SynthSpec::default()
    }
}

fn dataset() -> Dataset {
    gen_dataset(&spec()).unwrap().into_dataset().unwrap()
}

/// Encodes from the planted layer.
fn cfg() -> AnalysisConfig {
    AnalysisConfig { n_permutations: 10, layer: LayerSelector::Index(1), ..AnalysisConfig::default() }
}

#[test]
fn alignment_report_round_trips_through_json() {
    let ds = dataset();
    let report = run_alignment(&ds, "synth", &cfg()).unwrap();
    assert_eq!(report.subjects.len(), 2);
    let text = serde_json::to_string(&report).unwrap();
    let back: AlignmentReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    let agg = report.aggregate_of("pearson").unwrap();
    assert_eq!(agg.n, 2);
    assert!(agg.mean > 0.0);
}

#[test]
fn layer_time_and_topo_round_trip_and_export() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();

    let lt = run_layer_time(&ds, "synth", &cfg()).unwrap();
    assert_eq!(lt.argmax.0, 1);
    let back: LayerTimeResult = serde_json::from_str(&serde_json::to_string(&lt).unwrap()).unwrap();
    assert_eq!(back, lt);
    let csv_path = dir.path().join("lt.csv");
    export_report(ReportRef::LayerTime(&lt), &csv_path, ExportFormat::Csv).unwrap();
    // One row per (scope, layer, window): two subjects plus the mean.
    let rows = fs::read_to_string(&csv_path).unwrap().lines().count() - 1;
    assert_eq!(rows, 3 * 3 * lt.mean.windows.len());

    let topo = run_topo(&ds, "synth", None, &cfg()).unwrap();
    let back: TopoResult = serde_json::from_str(&serde_json::to_string(&topo).unwrap()).unwrap();
    assert_eq!(back, topo);
    let csv_path = dir.path().join("topo.csv");
    export_report(ReportRef::Topo(&topo), &csv_path, ExportFormat::Csv).unwrap();
    let rows = fs::read_to_string(&csv_path).unwrap().lines().count() - 1;
    assert_eq!(rows, topo.channels.len() * topo.windows.len());
    let svg_path = dir.path().join("topo.svg");
    export_report(ReportRef::Topo(&topo), &svg_path, ExportFormat::Svg).unwrap();
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("class=\"channel\"").count(), topo.channels.len() * topo.windows.len());
}

#[test]
fn svg_is_refused_for_tabular_results() {
    let ds = dataset();
    let rdm = run_rdm(&ds, "synth", &cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = export_report(ReportRef::Rdm(&rdm), dir.path().join("x.svg"), ExportFormat::Svg).unwrap_err();
    assert!(matches!(err, AnalysisError::Parameter(_)));
}

#[test]
fn saved_dataset_reloads_to_identical_results() {
    let synth = gen_dataset(&spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(dir.path(), &synth.parts(Dtype::F8)).unwrap();
    assert!(validate_manifest(&manifest).unwrap().is_empty());
    let loaded = load_dataset(&manifest).unwrap();
    let in_memory = synth.into_dataset().unwrap();
    let a = run_alignment(&loaded, "synth", &cfg()).unwrap();
    let b = run_alignment(&in_memory, "synth", &cfg()).unwrap();
    assert_eq!(a.subjects, b.subjects);
}

#[test]
fn category_scores_follow_planted_category_snr() {
    let spec = SynthSpec {
        categories: vec![
            SynthCategory { name: "clear".into(), snr: 8.0 },
            SynthCategory { name: "faint".into(), snr: 0.05 },
        ],
        n_stimuli: 120,
        ..spec()
    };
    let synth = gen_dataset(&spec).unwrap();
    let labels = synth.categories.clone().unwrap();
    let ds = synth.into_dataset().unwrap();
    let r = run_category(&ds, "synth", &labels, &cfg()).unwrap();
    let score = |name: &str| r.categories.iter().find(|c| c.category == name).unwrap().score.unwrap();
    assert!(score("clear") > score("faint"), "{r:?}");
}

#[test]
fn unknown_model_and_subject_are_reported() {
    let ds = dataset();
    assert!(run_alignment(&ds, "missing", &cfg()).is_err());
    let only_missing = AnalysisConfig { subjects: vec!["sub-99".into()], ..cfg() };
    assert!(run_alignment(&ds, "synth", &only_missing).is_err());
}

#[test]
fn per_fold_metrics_leave_the_encoding_score_alone() {
    let ds = dataset();
    let pooled = run_alignment(&ds, "synth", &cfg()).unwrap();
    let per_fold_cfg = AnalysisConfig { metric_pooling: MetricPooling::PerFold, ..cfg() };
    let per_fold = run_alignment(&ds, "synth", &per_fold_cfg).unwrap();
    for (a, b) in pooled.subjects.iter().zip(&per_fold.subjects) {
        assert_eq!(a.metrics.pearson, b.metrics.pearson);
        assert_eq!(a.significance, b.significance);
        for v in [b.metrics.spearman, b.metrics.cka, b.metrics.rsa, b.metrics.kendall] {
            let v = v.unwrap();
            assert!((-1.0..=1.0).contains(&v) && v > 0.0, "{v}");
        }
        assert_ne!(a.metrics.cka, b.metrics.cka);
    }
}
