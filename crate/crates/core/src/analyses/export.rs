use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    AlignmentReport, AnalysisError, BenchmarkResult, CategoryResult, LayerTimeResult, MetricSet, RdmResult, TopoResult,
};
use crate::encoder::LayerTimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
    Svg,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
            ExportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(format!("unknown format {other:?}; expected json, csv or svg")),
        }
    }
}

/// Any exportable result.
#[derive(Debug, Clone, Copy)]
pub enum ReportRef<'a> {
    Alignment(&'a AlignmentReport),
    LayerTime(&'a LayerTimeResult),
    Topo(&'a TopoResult),
    Category(&'a CategoryResult),
    Benchmark(&'a BenchmarkResult),
    Rdm(&'a RdmResult),
}

impl ReportRef<'_> {
    fn kind(&self) -> &'static str {
        match self {
            ReportRef::Alignment(_) => "alignment report",
            ReportRef::LayerTime(_) => "layer-time result",
            ReportRef::Topo(_) => "topography",
            ReportRef::Category(_) => "category result",
            ReportRef::Benchmark(_) => "benchmark regression",
            ReportRef::Rdm(_) => "RDM export",
        }
    }
}

/// Writes `report` to `path`.
///
/// JSON holds the full nested result. CSV flattens the main numeric table:
///
/// * alignment: `subject_id,pearson,spearman,cka,rsa,kendall,pearson_pooled,t,p,empirical_p`
/// * layer-time: `scope,layer,window_start_ms,window_end_ms,value` (`scope` is a subject id or `mean`)
/// * topography: `channel,region,x,y,window_start_ms,window_end_ms,value` (subject mean)
/// * category: `category,n,flagged,score,std`
/// * benchmark: `task,n,slope,intercept,r_squared,p_value`
/// * RDM: `subject_id,stimulus_a,stimulus_b,predicted,observed` (strict upper triangle)
///
/// Undefined values are empty cells. SVG is available for topographies
/// (one scalp panel per window) and layer-time grids (subject-mean heat map).
pub fn export_report(report: ReportRef<'_>, path: impl AsRef<Path>, format: ExportFormat) -> Result<(), AnalysisError> {
    let path = path.as_ref();
    let body = match (format, report) {
        (ExportFormat::Json, r) => to_json(r)?,
        (ExportFormat::Csv, r) => to_csv(r),
        (ExportFormat::Svg, ReportRef::Topo(t)) => topo_svg(t),
        (ExportFormat::Svg, ReportRef::LayerTime(l)) => grid_svg(&l.mean),
        (ExportFormat::Svg, r) => {
            return Err(AnalysisError::Parameter(format!("SVG export is not available for a {}", r.kind())))
        }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| AnalysisError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, body).map_err(|source| AnalysisError::Io { path: path.display().to_string(), source })
}

fn to_json(report: ReportRef<'_>) -> Result<String, AnalysisError> {
    let r = match report {
        ReportRef::Alignment(r) => serde_json::to_string_pretty(r),
        ReportRef::LayerTime(r) => serde_json::to_string_pretty(r),
        ReportRef::Topo(r) => serde_json::to_string_pretty(r),
        ReportRef::Category(r) => serde_json::to_string_pretty(r),
        ReportRef::Benchmark(r) => serde_json::to_string_pretty(r),
        ReportRef::Rdm(r) => serde_json::to_string_pretty(r),
    };
    r.map(|mut s| {
        s.push('\n');
        s
    })
    .map_err(|e| AnalysisError::Parameter(format!("cannot serialize {}: {e}", report.kind())))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn to_csv(report: ReportRef<'_>) -> String {
    let mut out = String::new();
    match report {
        ReportRef::Alignment(r) => {
            out.push_str("subject_id,");
            out.push_str(&MetricSet::<()>::NAMES.join(","));
            out.push_str(",pearson_pooled,t,p,empirical_p\n");
            for s in &r.subjects {
                let m: Vec<String> = s.metrics.values().iter().map(|v| opt(**v)).collect();
                let sig = s.significance.as_ref();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    csv_field(&s.subject_id),
                    m.join(","),
                    opt(s.pearson_pooled),
                    opt(sig.and_then(|g| g.t)),
                    opt(sig.and_then(|g| g.p)),
                    opt(sig.map(|g| g.empirical_p)),
                );
            }
        }
        ReportRef::LayerTime(r) => {
            out.push_str("scope,layer,window_start_ms,window_end_ms,value\n");
            let scopes =
                r.subjects.iter().map(|s| (s.subject_id.as_str(), &s.grid)).chain(std::iter::once(("mean", &r.mean)));
            for (scope, g) in scopes {
                for (l, name) in g.layer_names.iter().enumerate() {
                    for (w, win) in g.windows.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{}",
                            csv_field(scope),
                            csv_field(name),
                            win.start_ms,
                            win.end_ms,
                            g.values[l][w]
                        );
                    }
                }
            }
        }
        ReportRef::Topo(r) => {
            out.push_str("channel,region,x,y,window_start_ms,window_end_ms,value\n");
            for (c, name) in r.channels.iter().enumerate() {
                let pos = r.montage.get(name);
                for (w, win) in r.windows.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        csv_field(name),
                        r.regions[c],
                        opt(pos.map(|p| p.x)),
                        opt(pos.map(|p| p.y)),
                        win.start_ms,
                        win.end_ms,
                        r.values[c][w]
                    );
                }
            }
        }
        ReportRef::Category(r) => {
            out.push_str("category,n,flagged,score,std\n");
            for c in &r.categories {
                let _ =
                    writeln!(out, "{},{},{},{},{}", csv_field(&c.category), c.n, c.flagged, opt(c.score), opt(c.std));
            }
        }
        ReportRef::Benchmark(r) => {
            out.push_str("task,n,slope,intercept,r_squared,p_value\n");
            for t in &r.tasks {
                let g = &t.regression;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    csv_field(&t.task),
                    g.n,
                    g.slope,
                    g.intercept,
                    g.r_squared,
                    g.p_value
                );
            }
        }
        ReportRef::Rdm(r) => {
            out.push_str("subject_id,stimulus_a,stimulus_b,predicted,observed\n");
            for s in &r.subjects {
                let ids = &s.predicted.stimulus_ids;
                for i in 0..s.predicted.n {
                    for j in i + 1..s.predicted.n {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{}",
                            csv_field(&s.subject_id),
                            csv_field(&ids[i]),
                            csv_field(&ids[j]),
                            s.predicted.get(i, j),
                            s.observed.get(i, j)
                        );
                    }
                }
            }
        }
    }
    out
}

/// Blue (negative) to white to red (positive), scaled by `limit`.
fn diverging(v: f64, limit: f64) -> String {
    let t = if limit > 0.0 { (v / limit).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    let (r, g, b) = if t >= 0.0 { (255, fade(t), fade(t)) } else { (fade(t), fade(t), 255) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PANEL: f64 = 200.0;
const MARGIN: f64 = 20.0;

fn topo_svg(t: &TopoResult) -> String {
    let limit = t.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let width = t.windows.len() as f64 * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.0 * MARGIN + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (w, win) in t.windows.iter().enumerate() {
        let ox = MARGIN + w as f64 * (PANEL + MARGIN);
        let (cx, cy, r) = (ox + PANEL / 2.0, MARGIN + 20.0 + PANEL / 2.0, PANEL / 2.0);
        let _ = writeln!(s, r#"<g class="window" data-start-ms="{}" data-end-ms="{}">"#, win.start_ms, win.end_ms);
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            MARGIN + 10.0,
            xml_escape(&win.label())
        );
        let _ =
            writeln!(s, r##"<ellipse class="head" cx="{cx}" cy="{cy}" rx="{r}" ry="{r}" fill="none" stroke="#888"/>"##);
        for e in t.montage.entries() {
            let Some(c) = t.channels.iter().position(|n| *n == e.channel) else {
                continue;
            };
            let v = t.values[c][w];
            let _ = writeln!(
                s,
                r##"<circle class="channel" data-channel="{name}" cx="{:.2}" cy="{:.2}" r="7" fill="{}" stroke="#333"><title>{name}: {v}</title></circle>"##,
                cx + e.x * (r - 10.0),
                cy - e.y * (r - 10.0),
                diverging(v, limit),
                name = xml_escape(&e.channel),
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn grid_svg(g: &LayerTimeGrid) -> String {
    const CELL: f64 = 28.0;
    const LEFT: f64 = 120.0;
    const TOP: f64 = 30.0;
    let limit = g.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let width = LEFT + g.windows.len() as f64 * CELL + MARGIN;
    let height = TOP + g.layer_names.len() as f64 * CELL + MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (w, win) in g.windows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            LEFT + (w as f64 + 0.5) * CELL,
            TOP - 8.0,
            win.start_ms
        );
    }
    for (l, name) in g.layer_names.iter().enumerate() {
        let y = TOP + l as f64 * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 6.0,
            y + CELL * 0.65,
            xml_escape(name)
        );
        for (w, &v) in g.values[l].iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{:.1}" y="{y:.1}" width="{CELL}" height="{CELL}" fill="{}"><title>{} at {}: {v}</title></rect>"#,
                LEFT + w as f64 * CELL,
                diverging(v, limit),
                xml_escape(name),
                g.windows[w].label(),
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
