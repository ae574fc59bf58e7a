use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use neuralign::analyses::{self, export_report, ExportFormat, ReportRef};
use neuralign::data::{load_benchmark_scores, save_dataset, Dtype};
use neuralign::synth::gen_dataset;
use neuralign::{load_dataset, validate_manifest, CategoryLabels, Dataset, SynthSpec};

use crate::args::{
    AlignArgs, BenchmarkArgs, CategoryArgs, Command, DtypeArg, LayerTimeArgs, OutputArgs, RdmArgs, SynthArgs, TopoArgs,
};
use crate::error::{CliError, EXIT_VALIDATION};

pub fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Validate { manifest, json } => validate(&manifest, json),
        Command::Synth(a) => synth(&a),
        Command::Align(a) => align(&a),
        Command::LayerTime(a) => layer_time(&a),
        Command::Topo(a) => topo(&a),
        Command::Category(a) => category(&a),
        Command::BenchmarkCorr(a) => benchmark(&a),
        Command::Rdm(a) => rdm(&a),
    }
}

fn validate(manifest: &Path, json: bool) -> Result<u8, CliError> {
    let issues = validate_manifest(manifest)?;
    if json {
        let s = serde_json::to_string_pretty(&issues).expect("issues serialize");
        println!("{s}");
    } else {
        for i in &issues {
            println!("{}\t{}\t{}", i.code, i.location, i.message);
        }
    }
    if issues.is_empty() {
        eprintln!("{}: ok", manifest.display());
        Ok(0)
    } else {
        eprintln!("{}: {} issue(s)", manifest.display(), issues.len());
        Ok(EXIT_VALIDATION)
    }
}

fn synth(a: &SynthArgs) -> Result<u8, CliError> {
    let mut spec: SynthSpec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.clone(), source })?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let ds = gen_dataset(&spec)?;
    let dtype = match a.dtype {
        DtypeArg::F4 => Dtype::F4,
        DtypeArg::F8 => Dtype::F8,
    };
    let manifest = save_dataset(&a.out, &ds.parts(dtype))?;
    // The resolved spec sits next to the data so the planted ground truth travels with it.
    write_json(&a.out.join("synth_spec.json"), &spec)?;
    println!("{}", manifest.display());
    Ok(0)
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    info!("loading {}", path.display());
    Ok(load_dataset(path)?)
}

/// The requested model, or the only one in the dataset.
fn resolve_model(ds: &Dataset, requested: Option<&str>) -> Result<String, CliError> {
    match requested {
        Some(m) => Ok(m.to_string()),
        None => match ds.models.as_slice() {
            [only] => Ok(only.model_id().to_string()),
            many => Err(CliError::Usage(format!(
                "dataset has {} models; pick one with --model ({})",
                many.len(),
                many.iter().map(|m| m.model_id()).collect::<Vec<_>>().join(", ")
            ))),
        },
    }
}

fn align(a: &AlignArgs) -> Result<u8, CliError> {
    let ds = load(&a.run.manifest)?;
    let cfg = a.config();
    let models: Vec<String> = if a.models.is_empty() {
        ds.models.iter().map(|m| m.model_id().to_string()).collect()
    } else {
        a.models.clone()
    };
    for m in &models {
        let report = analyses::run_alignment(&ds, m, &cfg)?;
        write_report(&a.output, &format!("alignment_{m}"), ReportRef::Alignment(&report))?;
    }
    Ok(0)
}

fn layer_time(a: &LayerTimeArgs) -> Result<u8, CliError> {
    let ds = load(&a.run.manifest)?;
    let m = resolve_model(&ds, a.model.as_deref())?;
    let r = analyses::run_layer_time(&ds, &m, &a.run.config())?;
    write_report(&a.output, &format!("layer_time_{m}"), ReportRef::LayerTime(&r))?;
    let (l, w) = r.argmax;
    eprintln!(
        "peak: layer {l} ({}), window {}, score {:.4}",
        r.argmax_layer,
        r.argmax_window.label(),
        r.mean.values[l][w]
    );
    Ok(0)
}

fn topo(a: &TopoArgs) -> Result<u8, CliError> {
    let ds = load(&a.run.manifest)?;
    let m = resolve_model(&ds, a.model.as_deref())?;
    let r = analyses::run_topo(&ds, &m, a.windows.as_deref(), &a.run.config())?;
    write_report(&a.output, &format!("topo_{m}"), ReportRef::Topo(&r))?;
    if let Some(first) = r.ranking.first() {
        eprintln!("top region: {first}");
    }
    Ok(0)
}

fn category(a: &CategoryArgs) -> Result<u8, CliError> {
    let ds = load(&a.run.manifest)?;
    let m = resolve_model(&ds, a.model.as_deref())?;
    let labels = match (&a.labels, &ds.categories) {
        (Some(path), _) => CategoryLabels::load(path, None)?,
        (None, Some(l)) => l.clone(),
        (None, None) => {
            return Err(CliError::Usage(
                "no category labels: pass --labels or add categories_path to the manifest".into(),
            ))
        }
    };
    let r = analyses::run_category(&ds, &m, &labels, &a.config())?;
    write_report(&a.output, &format!("category_{m}"), ReportRef::Category(&r))?;
    Ok(0)
}

fn benchmark(a: &BenchmarkArgs) -> Result<u8, CliError> {
    let reports = a
        .reports
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.clone(), source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scores = load_benchmark_scores(&a.scores)?;
    let r = analyses::run_benchmark_corr(&reports, &scores, &a.metric)?;
    write_report(&a.output, "benchmark_corr", ReportRef::Benchmark(&r))?;
    Ok(0)
}

fn rdm(a: &RdmArgs) -> Result<u8, CliError> {
    let ds = load(&a.run.manifest)?;
    let m = resolve_model(&ds, a.model.as_deref())?;
    let r = analyses::run_rdm(&ds, &m, &a.run.config())?;
    write_report(&a.output, &format!("rdm_{m}"), ReportRef::Rdm(&r))?;
    Ok(0)
}

fn write_report(out: &OutputArgs, stem: &str, report: ReportRef<'_>) -> Result<(), CliError> {
    for &f in &out.format {
        let format = ExportFormat::from(f);
        let path = out.out.join(format!("{stem}.{}", format.extension()));
        export_report(report, &path, format)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn write_json(path: &PathBuf, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    fs::write(path, s).map_err(|source| CliError::Io { path: path.clone(), source })
}
