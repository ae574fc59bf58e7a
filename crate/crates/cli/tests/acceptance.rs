//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! `cargo test -p neuralign-cli --test acceptance [-- FILTER...]` runs the
//! criteria whose name contains one of the filters.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use neuralign::analyses::{run_layer_time, run_topo};
use neuralign::data::npy::{encode_npy, parse_npy};
use neuralign::data::{Dtype, NpyArray};
use neuralign::encoder::{cv_encode, ridge_solve, ridge_solve_with, RidgeOptions, SolvePath};
use neuralign::metrics::{kendall_tau, linear_cka, spearman};
use neuralign::nalgebra::DMatrix;
use neuralign::stats::{ols_fit, permutation_null};
use neuralign::synth::{derive_seed, gen_dataset, gen_linear_dataset, rank_oracle};
use neuralign::{AnalysisConfig, CvConfig, LayerSelector, Region, StreamRng, SynthSpec, Window};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    ("ridge_correctness", Some(Duration::from_secs(5)), ridge_correctness),
    ("metric_oracles", Some(Duration::from_secs(30)), metric_oracles),
    ("snr_law", Some(Duration::from_secs(60)), snr_law),
    ("null_calibration", Some(Duration::from_secs(600)), null_calibration),
    ("planted_recovery", Some(Duration::from_secs(600)), planted_recovery),
    ("cli_determinism", None, cli_determinism),
    ("ols_identities", None, ols_identities),
    ("npy_format", None, npy_format),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for &(name, budget, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut out = run();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > b {
                out.pass = false;
                out.detail.push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name} ({:.1}s): {}", elapsed.as_secs_f64(), out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("{} criteria, {} passed, {failed} failed", ran, ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn random_matrix(rng: &mut StreamRng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.normal())
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Gaussian elimination with partial pivoting on `a · x = b` (column by column).
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            for k in 0..b[r].len() {
                b[r][k] -= f * b[c][k];
            }
        }
    }
    let m = b[0].len();
    let mut x = vec![vec![0.0; m]; n];
    for r in (0..n).rev() {
        for k in 0..m {
            let s: f64 = (r + 1..n).map(|j| a[r][j] * x[j][k]).sum();
            x[r][k] = (b[r][k] - s) / a[r][r];
        }
    }
    x
}

/// Centred normal equations `(XcᵀXc + αI) β = XcᵀYc`, built entry by entry.
fn ridge_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = x.shape();
    let m = y.ncols();
    let col_mean = |a: &DMatrix<f64>, j: usize| (0..n).map(|i| a[(i, j)]).sum::<f64>() / n as f64;
    let xm: Vec<f64> = (0..d).map(|j| col_mean(x, j)).collect();
    let ym: Vec<f64> = (0..m).map(|j| col_mean(y, j)).collect();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![vec![0.0; m]; d];
    for p in 0..d {
        for q in 0..d {
            a[p][q] = (0..n).map(|i| (x[(i, p)] - xm[p]) * (x[(i, q)] - xm[q])).sum();
        }
        a[p][p] += alpha;
        for k in 0..m {
            b[p][k] = (0..n).map(|i| (x[(i, p)] - xm[p]) * (y[(i, k)] - ym[k])).sum();
        }
    }
    let beta = gauss_solve(a, b);
    let intercept = (0..m).map(|k| ym[k] - (0..d).map(|p| xm[p] * beta[p][k]).sum::<f64>()).collect();
    (DMatrix::from_fn(d, m, |p, k| beta[p][k]), intercept)
}

fn ridge_correctness() -> Outcome {
    let mut rng = StreamRng::new(101);
    let (mut worst_oracle, mut worst_paths) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = 2 + rng.below(19);
        let d = 1 + rng.below(8);
        let m = 1 + rng.below(4);
        let alpha = 10f64.powf(-3.0 + 5.0 * rng.uniform());
        let x = random_matrix(&mut rng, n, d);
        let y = random_matrix(&mut rng, n, m);
        let fit = match ridge_solve(&x, &y, alpha) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("ridge_solve failed on n={n} d={d}: {e}")),
        };
        let (beta, intercept) = ridge_oracle(&x, &y, alpha);
        let scale = max_abs(&beta).max(intercept.iter().fold(0.0, |a, v| a.max(v.abs())));
        let err_b = max_abs(&(&fit.beta - &beta));
        let err_i = intercept.iter().zip(fit.intercept.iter()).fold(0.0f64, |a, (o, f)| a.max((o - f).abs()));
        worst_oracle = worst_oracle.max(err_b.max(err_i) / scale);

        let opts = |path| RidgeOptions { path, ..RidgeOptions::default() };
        let p = ridge_solve_with(&x, &y, alpha, opts(SolvePath::Primal)).unwrap();
        let q = ridge_solve_with(&x, &y, alpha, opts(SolvePath::Dual)).unwrap();
        worst_paths = worst_paths.max(max_abs(&(&p.beta - &q.beta)) / max_abs(&p.beta).max(f64::MIN_POSITIVE));
    }
    Outcome::new(
        worst_oracle <= 1e-10 && worst_paths <= 1e-8,
        format!(
            "max rel err vs normal equations {worst_oracle:.2e} (tol 1e-10), primal/dual {worst_paths:.2e} (tol 1e-8)"
        ),
    )
}

/// All permutations of `0..n` (Heap's algorithm).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}

/// Linear CKA from explicitly double-centred Gram matrices, one entry at a time.
fn cka_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let gram = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = (0..m.ncols()).map(|f| m[(i, f)] * m[(j, f)]).sum();
            }
        }
        let row: Vec<f64> = g.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let all = row.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                g[i][j] = g[i][j] - row[i] - row[j] + all;
            }
        }
        g
    };
    let (k, l) = (gram(a), gram(b));
    let (mut kl, mut kk, mut ll) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            kl += k[i][j] * l[i][j];
            kk += k[i][j] * k[i][j];
            ll += l[i][j] * l[i][j];
        }
    }
    kl / (kk.sqrt() * ll.sqrt())
}

fn random_orthogonal(rng: &mut StreamRng, d: usize) -> DMatrix<f64> {
    random_matrix(rng, d, d).qr().q()
}

fn metric_oracles() -> Outcome {
    let mut mismatches = Vec::new();
    let base: Vec<f64> = (0..7).map(|i| i as f64).collect();
    let perms = permutations(7);
    for p in &perms {
        let y: Vec<f64> = p.iter().map(|&i| i as f64).collect();
        let (rho, tau) = rank_oracle(&base, &y).unwrap();
        if spearman(&base, &y).unwrap() != rho || kendall_tau(&base, &y).unwrap() != tau {
            mismatches.push(format!("{p:?}"));
        }
    }
    let mut rng = StreamRng::new(202);
    let mut tied = 0;
    while tied < 1000 {
        let n = 3 + rng.below(10);
        let levels = 2 + rng.below(4);
        let x: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 * 0.5).collect();
        tied += 1;
        match rank_oracle(&x, &y) {
            Ok((rho, tau)) => {
                if spearman(&x, &y).ok() != Some(rho) || kendall_tau(&x, &y).ok() != Some(tau) {
                    mismatches.push(format!("{x:?} / {y:?}"));
                }
            }
            // Constant input: the fast paths must refuse too.
            Err(_) => {
                if spearman(&x, &y).is_ok() || kendall_tau(&x, &y).is_ok() {
                    mismatches.push(format!("{x:?} / {y:?} (undefined)"));
                }
            }
        }
    }

    let (mut cka_err, mut self_err, mut inv_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = 3 + rng.below(30);
        let (da, db) = (1 + rng.below(12), 1 + rng.below(12));
        let a = random_matrix(&mut rng, n, da);
        let b = random_matrix(&mut rng, n, db);
        let c = linear_cka(&a, &b).unwrap();
        cka_err = cka_err.max((c - cka_oracle(&a, &b)).abs());
        self_err = self_err.max((linear_cka(&a, &a).unwrap() - 1.0).abs());
        let rotated = &a * random_orthogonal(&mut rng, da);
        let scaled = &b * 3.7;
        inv_err = inv_err.max((linear_cka(&rotated, &scaled).unwrap() - c).abs());
    }
    let pass = mismatches.is_empty() && cka_err <= 1e-12 && self_err <= 1e-10 && inv_err <= 1e-8;
    Outcome::new(
        pass,
        format!(
            "{} permutations + {tied} tied cases, {} rank mismatches{}; CKA vs oracle {cka_err:.1e} (tol 1e-12), self {self_err:.1e} (tol 1e-10), invariance {inv_err:.1e} (tol 1e-8)",
            perms.len(),
            mismatches.len(),
            mismatches.first().map(|m| format!(" e.g. {m}")).unwrap_or_default()
        ),
    )
}

fn snr_law() -> Outcome {
    let target = 0.5f64.sqrt();
    let rhos: Vec<f64> = (0..50)
        .map(|seed| {
            let (x, y, _) = gen_linear_dataset(500, 8, 4, 1.0, seed);
            let cfg = CvConfig { rng_seed: seed, ..CvConfig::default() };
            cv_encode(&x, &y, &cfg).unwrap().rho
        })
        .collect();
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    Outcome::new(
        (mean - target).abs() <= 0.03,
        format!("mean rho {mean:.4} over 50 seeds, expected {target:.4} +/- 0.03"),
    )
}

fn null_calibration() -> Outcome {
    const REPEATS: u64 = 200;
    const N_PERM: usize = 200;
    let mut rejections = 0;
    let mut scores = Vec::new();
    for r in 0..REPEATS {
        let mut rng = StreamRng::derived(303, r);
        let x = random_matrix(&mut rng, 200, 8);
        let y = random_matrix(&mut rng, 200, 4);
        let cfg = CvConfig { rng_seed: r, ..CvConfig::default() };
        let observed = cv_encode(&x, &y, &cfg).unwrap().rho;
        let null = permutation_null(&x, &y, &cfg, N_PERM, derive_seed(404, r)).unwrap();
        if null.empirical_p(observed) <= 0.05 {
            rejections += 1;
        }
        scores.push(observed);
    }
    let rate = rejections as f64 / REPEATS as f64;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (scores.len() - 1) as f64).sqrt();
    Outcome::new(
        (0.01..=0.10).contains(&rate) && mean.abs() < 0.01,
        format!(
            "rejection rate {rate:.3} at 0.05 (range [0.01, 0.10]); noise score {mean:.4} +/- {sd:.4} (|mean| < 0.01)"
        ),
    )
}

fn planted_recovery() -> Outcome {
    const SEEDS: u64 = 40;
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..SEEDS {
        let spec = SynthSpec { seed, snr: 2.0, ..SynthSpec::default() };
        let planted_window = Window::new(spec.planted_window.0, spec.planted_window.1);
        let ds = gen_dataset(&spec).unwrap().into_dataset().unwrap();
        let cfg = AnalysisConfig::default();
        let lt = run_layer_time(&ds, &spec.model_id, &cfg).unwrap();
        let topo_cfg = AnalysisConfig { layer: LayerSelector::Index(spec.planted_layer), ..cfg };
        let topo = run_topo(&ds, &spec.model_id, None, &topo_cfg).unwrap();
        let grid_ok = lt.argmax.0 == spec.planted_layer && lt.argmax_window == planted_window;
        let region_ok = topo.ranking.first() == Some(&Region::Occipital);
        if grid_ok && region_ok {
            hits += 1;
        } else {
            misses.push(format!(
                "seed {seed}: peak {}/{}, top region {:?}",
                lt.argmax_layer,
                lt.argmax_window.label(),
                topo.ranking.first()
            ));
        }
    }
    let rate = hits as f64 / SEEDS as f64;
    Outcome::new(
        rate >= 0.95,
        format!(
            "{hits}/{SEEDS} seeds recovered (need >= 95%){}",
            misses.first().map(|m| format!("; {m}")).unwrap_or_default()
        ),
    )
}

fn neuralign(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_neuralign"))
        .args(args)
        .env_remove("NEURALIGN_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

/// Numeric leaves within `tol` relative; everything else identical.
fn json_close(a: &serde_json::Value, b: &serde_json::Value, tol: f64, path: &str) -> Result<(), String> {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= tol * x.abs().max(y.abs()) {
                Ok(())
            } else {
                Err(format!("{path}: {x} vs {y}"))
            }
        }
        (Array(x), Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).enumerate().try_for_each(|(i, (u, v))| json_close(u, v, tol, &format!("{path}[{i}]")))
        }
        (Object(x), Object(y)) if x.len() == y.len() => x.iter().try_for_each(|(k, u)| match y.get(k) {
            Some(v) => json_close(u, v, tol, &format!("{path}.{k}")),
            None => Err(format!("{path}.{k} missing")),
        }),
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

fn cli_determinism() -> Outcome {
    match cli_determinism_inner() {
        Ok(detail) => Outcome::new(true, detail),
        Err(e) => Outcome::new(false, e),
    }
}

fn cli_determinism_inner() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let spec = SynthSpec {
        n_stimuli: 60,
        n_channels: 8,
        n_layers: 3,
        planted_layer: 1,
        dim: 12,
        n_repetitions: 2,
        epoch_ms: 300.0,
        seed: 5,
        ..SynthSpec::default()
    };
    let spec_path = root.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).map_err(|e| e.to_string())?;
    let data = root.join("data");
    neuralign(&["synth", "--spec", s(&spec_path), "--out", s(&data)])?;
    let manifest = data.join("manifest.json");

    let runs: [(&str, &[&str], &str); 3] = [
        ("align", &["--permutations", "20"], "alignment_synth.json"),
        ("layer-time", &[], "layer_time_synth.json"),
        ("topo", &[], "topo_synth.json"),
    ];
    let mut compared = 0;
    for (cmd, extra, file) in runs {
        let mut outputs = Vec::new();
        for (tag, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
            let out = root.join(format!("{cmd}_{tag}"));
            let mut args = vec![cmd, "--jobs", jobs, "--manifest", s(&manifest), "--out", s(&out)];
            args.extend_from_slice(extra);
            neuralign(&args)?;
            outputs.push(std::fs::read(out.join(file)).map_err(|e| format!("{file}: {e}"))?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{cmd}: two --jobs 1 runs differ"));
        }
        let parse = |b: &[u8]| serde_json::from_slice::<serde_json::Value>(b).map_err(|e| e.to_string());
        json_close(&parse(&outputs[0])?, &parse(&outputs[2])?, 1e-10, cmd)
            .map_err(|e| format!("--jobs 3 differs beyond 1e-10: {e}"))?;
        compared += 1;
    }
    Ok(format!("{compared} subcommands: --jobs 1 bitwise identical, --jobs 3 within 1e-10"))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn ols_identities() -> Outcome {
    let mut rng = StreamRng::new(505);
    let (mut line_r2, mut line_slope) = (0.0f64, 0.0f64);
    let mut identity = 0.0f64;
    for _ in 0..100 {
        let n = 3 + rng.below(40);
        let x: Vec<f64> = (0..n).map(|_| 10.0 * rng.normal()).collect();
        let (a, b) = (rng.normal(), 1.0 + rng.uniform());
        let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
        let fit = ols_fit(&x, &y).unwrap();
        line_r2 = line_r2.max((fit.r_squared - 1.0).abs());
        line_slope = line_slope.max((fit.slope - b).abs());

        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.normal() * 5.0).collect();
        let fit = ols_fit(&x, &y).unwrap();
        let (mx, my) = (x.iter().sum::<f64>() / n as f64, y.iter().sum::<f64>() / n as f64);
        let sxy: f64 = x.iter().zip(&y).map(|(u, v)| (u - mx) * (v - my)).sum();
        let sxx: f64 = x.iter().map(|u| (u - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        let r = sxy / (sxx * syy).sqrt();
        identity = identity.max((fit.r_squared - r * r).abs());
    }
    Outcome::new(
        line_r2 <= 1e-12 && line_slope <= 1e-12 && identity <= 1e-12,
        format!(
            "exact line: |R2 - 1| {line_r2:.1e}, slope err {line_slope:.1e}; |R2 - r^2| {identity:.1e} (tol 1e-12)"
        ),
    )
}

/// NPY v1.0 bytes with an arbitrary header text, padded as numpy does.
fn npy_bytes(version: [u8; 2], header: &str, payload: &[u8]) -> Vec<u8> {
    let pad = (64 - (10 + header.len() + 1) % 64) % 64;
    let h = format!("{header}{}\n", " ".repeat(pad));
    let mut out = b"\x93NUMPY".to_vec();
    out.extend_from_slice(&version);
    out.extend_from_slice(&(h.len() as u16).to_le_bytes());
    out.extend_from_slice(h.as_bytes());
    out.extend_from_slice(payload);
    out
}

fn npy_format() -> Outcome {
    let mut rng = StreamRng::new(606);
    let mut failures = Vec::new();
    for dtype in [Dtype::F4, Dtype::F8] {
        for shape in [vec![7], vec![3, 4, 5], vec![2, 1, 9], vec![0, 4]] {
            let len = shape.iter().product();
            let data: Vec<f64> = (0..len)
                .map(|_| match dtype {
                    Dtype::F4 => rng.normal() as f32 as f64,
                    Dtype::F8 => rng.normal() * 1e3,
                })
                .collect();
            let array = NpyArray::new(dtype, shape.clone(), data).unwrap();
            let bytes = encode_npy(&array).unwrap();
            let back = parse_npy(&bytes).unwrap();
            let same_bits = back.data.iter().zip(&array.data).all(|(a, b)| a.to_bits() == b.to_bits());
            if back.shape != array.shape || back.dtype != dtype || !same_bits || encode_npy(&back).unwrap() != bytes {
                failures.push(format!("round trip {dtype:?} {shape:?}"));
            }
        }
    }

    let payload: Vec<u8> = (0..6).flat_map(|i| (i as f64).to_le_bytes()).collect();
    let good = "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }";
    let valid = npy_bytes([1, 0], good, &payload);
    let expected: Vec<f64> = (0..6).map(f64::from).collect();
    if parse_npy(&valid).ok().map(|a| a.data) != Some(expected) {
        failures.push("reference file does not decode".into());
    }
    let mut bad_magic = valid.clone();
    bad_magic[1] = b'X';
    let mut overlong = valid.clone();
    overlong[8..10].copy_from_slice(&u16::MAX.to_le_bytes());
    let mut non_ascii = valid.clone();
    non_ascii[12] = 0xC3;
    let corpus: Vec<(&str, Vec<u8>, &str)> = vec![
        ("bad magic", bad_magic, "NPY_BAD_MAGIC"),
        ("version 2.0", npy_bytes([2, 0], good, &payload), "NPY_UNSUPPORTED_VERSION"),
        ("header length past end", overlong, "NPY_TRUNCATED"),
        ("non-ASCII header", non_ascii, "NPY_BAD_HEADER"),
        ("integer dtype", npy_bytes([1, 0], &good.replace("<f8", "<i4"), &payload), "UNSUPPORTED_DTYPE"),
        ("big-endian dtype", npy_bytes([1, 0], &good.replace("<f8", ">f8"), &payload), "UNSUPPORTED_DTYPE"),
        ("fortran order", npy_bytes([1, 0], &good.replace("False", "True"), &payload), "NPY_FORTRAN_ORDER"),
        ("missing shape", npy_bytes([1, 0], "{'descr': '<f8', 'fortran_order': False, }", &payload), "NPY_BAD_HEADER"),
        ("shape larger than payload", npy_bytes([1, 0], &good.replace("(2, 3)", "(3, 3)"), &payload), "NPY_TRUNCATED"),
        (
            "shape smaller than payload",
            npy_bytes([1, 0], &good.replace("(2, 3)", "(2, 2)"), &payload),
            "NPY_SIZE_MISMATCH",
        ),
    ];
    for (name, bytes, code) in &corpus {
        let got = std::panic::catch_unwind(|| parse_npy(bytes));
        match got {
            Ok(Err(e)) if e.code() == *code => {}
            Ok(Err(e)) => failures.push(format!("{name}: {} instead of {code}", e.code())),
            Ok(Ok(_)) => failures.push(format!("{name}: accepted")),
            Err(_) => failures.push(format!("{name}: panicked")),
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "8 round trips, {} corrupted headers; {}",
            corpus.len(),
            if failures.is_empty() { "all as designated".to_string() } else { failures.join("; ") }
        ),
    )
}
