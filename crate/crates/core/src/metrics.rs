//! Similarity measures between predicted and observed responses: Pearson,
//! Spearman, Kendall's tau-b, linear CKA, and RSA over correlation-distance RDMs.
//!
//! Correlations of constant inputs are undefined and surface as
//! [`MetricsError::Undefined`]; aggregations that need a number map them to 0
//! and report how many were mapped.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("length error: {0}")]
    Length(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::Length(format!("inputs differ in length ({} vs {})", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(MetricsError::Length(format!("need at least {min} values, got {}", x.len())));
    }
    Ok(())
}

/// Product-moment correlation of two equal-length vectors (length >= 2).
pub(crate) fn pearson_core(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::Undefined("correlation of a constant vector"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(x, y, 3)?;
    pearson_core(x, y)
}

/// Fractional ranks starting at 1; ties share the mean of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = rank;
        }
        i = j;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(x, y, 3)?;
    pearson_core(&ranks(x), &ranks(y))
}

/// Kendall's tau-b in O(n log n) (Knight's merge-sort counting).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(x, y, 2)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |t: u64| t * (t.saturating_sub(1)) / 2;
    let n0 = pairs(n as u64);
    // ties in x, and joint ties in (x, y), over the (x, y)-sorted order
    let (mut n1, mut n3) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                n3 += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            n1 += pairs(run_x);
            n3 += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    n1 += pairs(run_x);
    n3 += pairs(run_xy);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);

    let mut n2 = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            n2 += pairs(run_y);
            run_y = 1;
        }
    }
    n2 += pairs(run_y);

    let untied_x = n0 - n1;
    let untied_y = n0 - n2;
    if untied_x == 0 || untied_y == 0 {
        return Err(MetricsError::Undefined("all pairs tied in one input"));
    }
    let concordant_minus_discordant = (n0 + n3) as i64 - n1 as i64 - n2 as i64 - 2 * discordant as i64;
    Ok(concordant_minus_discordant as f64 / ((untied_x as f64) * (untied_y as f64)).sqrt())
}

/// Stable merge sort of `v`, returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn center_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = a.row_mean();
    let mut c = a.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

/// Linear CKA between two representations of the same `n` stimuli.
///
/// With `K = AAᵀ`, `L = BBᵀ` and `H` the centring matrix, returns
/// `⟨HKH, HLH⟩_F / (‖HKH‖_F ‖HLH‖_F)`. Evaluated in feature space when that
/// is smaller than the `n × n` Gram matrices (identical value).
pub fn linear_cka(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(MetricsError::Length(format!("row counts differ ({n} vs {})", b.nrows())));
    }
    if n < 3 {
        return Err(MetricsError::Length(format!("need at least 3 rows, got {n}")));
    }
    let (ac, bc) = (center_columns(a), center_columns(b));
    let (cross, norm_a, norm_b) = if n <= a.ncols().max(b.ncols()) {
        let k = &ac * ac.transpose();
        let l = &bc * bc.transpose();
        (k.dot(&l), k.norm(), l.norm())
    } else {
        let ab = ac.transpose() * &bc;
        let aa = ac.transpose() * &ac;
        let bb = bc.transpose() * &bc;
        (ab.norm_squared(), aa.norm(), bb.norm())
    };
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(MetricsError::Undefined("centred Gram matrix has zero norm"));
    }
    Ok((cross / (norm_a * norm_b)).clamp(0.0, 1.0))
}

/// Representational dissimilarity matrix: `1 − pearson(row_i, row_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdm {
    /// Row-major `n × n` entries.
    pub values: Vec<f64>,
    pub n: usize,
    pub stimulus_ids: Vec<String>,
}

impl Rdm {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.values[i * self.n + i + 1..(i + 1) * self.n]);
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.values)
    }
}

/// Correlation-distance RDM over the rows of `x`. Needs `n >= 2`, `d >= 2`.
///
/// Constant rows have undefined correlation; they get dissimilarity 1 to
/// every other row.
pub fn compute_rdm(x: &DMatrix<f64>, stimulus_ids: &[String]) -> Result<Rdm, MetricsError> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(MetricsError::Parameter(format!("RDM needs at least 2 rows, got {n}")));
    }
    if d < 2 {
        return Err(MetricsError::Parameter(format!("RDM needs at least 2 features per row, got {d}")));
    }
    if stimulus_ids.len() != n {
        return Err(MetricsError::Alignment(format!("{} stimulus ids for {n} rows", stimulus_ids.len())));
    }
    let mut z = x.clone();
    let mut constant = vec![false; n];
    for (i, mut row) in z.row_iter_mut().enumerate() {
        let m = row.sum() / d as f64;
        row.add_scalar_mut(-m);
        let norm = row.norm();
        if norm == 0.0 {
            constant[i] = true;
        } else {
            row /= norm;
        }
    }
    let n_constant = constant.iter().filter(|c| **c).count();
    if n_constant > 0 {
        log::warn!("{n_constant} constant row(s) in RDM input; dissimilarity set to 1");
    }
    let corr = &z * z.transpose();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = if constant[i] || constant[j] { 1.0 } else { (1.0 - corr[(i, j)]).clamp(0.0, 2.0) };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(Rdm { values, n, stimulus_ids: stimulus_ids.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    #[default]
    Spearman,
    Kendall,
}

/// Rank correlation between the strict upper triangles of two RDMs.
pub fn rsa_score(a: &Rdm, b: &Rdm, method: RankMethod) -> Result<f64, MetricsError> {
    if a.stimulus_ids != b.stimulus_ids {
        return Err(MetricsError::Alignment("RDMs are not over the same ordered stimulus ids".into()));
    }
    let (ua, ub) = (a.upper_triangle(), b.upper_triangle());
    match method {
        RankMethod::Spearman => spearman(&ua, &ub),
        RankMethod::Kendall => kendall_tau(&ua, &ub),
    }
}

/// Mean of a per-column statistic where undefined columns count as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnMean {
    pub value: f64,
    pub n_undefined: usize,
}

pub fn column_mean<F>(pred: &DMatrix<f64>, target: &DMatrix<f64>, f: F) -> Result<ColumnMean, MetricsError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, MetricsError>,
{
    if pred.shape() != target.shape() {
        return Err(MetricsError::Length(format!("shape {:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.ncols() == 0 {
        return Err(MetricsError::Length("no columns".into()));
    }
    let mut sum = 0.0;
    let mut n_undefined = 0;
    for (p, t) in pred.column_iter().zip(target.column_iter()) {
        match f(p.as_slice(), t.as_slice()) {
            Ok(v) => sum += v,
            Err(MetricsError::Undefined(_)) => n_undefined += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ColumnMean { value: sum / pred.ncols() as f64, n_undefined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::StreamRng;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut r = StreamRng::new(seed);
        DMatrix::from_fn(n, d, |_, _| r.normal())
    }

    /// Gram matrices, explicit H·K·H and Frobenius sums, element by element.
    fn naive_cka(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let gram = |m: &DMatrix<f64>| {
            let mut g = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..m.ncols() {
                        g[i][j] += m[(i, k)] * m[(j, k)];
                    }
                }
            }
            g
        };
        let center = |g: Vec<Vec<f64>>| {
            let h = |i: usize, j: usize| if i == j { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 };
            let mut hg = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        hg[i][j] += h(i, k) * g[k][j];
                    }
                }
            }
            let mut out = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        out[i][j] += hg[i][k] * h(k, j);
                    }
                }
            }
            out
        };
        let (k, l) = (center(gram(a)), center(gram(b)));
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

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(MetricsError::Undefined(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(MetricsError::Length(_))));
    }

    #[test]
    fn mid_ranks() {
        assert_eq!(ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_of_monotone_transform() {
        let x: Vec<f64> = (0..20).map(|v| v as f64 * 0.37 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp() + v.powi(3)).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(MetricsError::Undefined(_))));
    }

    #[test]
    fn cka_self_and_naive_oracle() {
        let a = random(8, 3, 1);
        let b = random(8, 5, 2);
        assert!((linear_cka(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        let fast = linear_cka(&a, &b).unwrap();
        assert!((fast - naive_cka(&a, &b)).abs() < 1e-12);
        // tall inputs take the feature-space route
        let a = random(30, 3, 3);
        let b = random(30, 4, 4);
        assert!((linear_cka(&a, &b).unwrap() - naive_cka(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn cka_undefined_for_constant_rows() {
        let a = DMatrix::from_element(5, 2, 1.0);
        let b = random(5, 2, 0);
        assert!(matches!(linear_cka(&a, &b), Err(MetricsError::Undefined(_))));
    }

    #[test]
    fn rdm_examples() {
        let mut x = random(6, 4, 7);
        let r2 = x.row(2).clone_owned();
        x.set_row(4, &r2);
        x.set_row(5, &(-x.row(0).clone_owned()));
        let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let rdm = compute_rdm(&x, &ids).unwrap();
        assert!(rdm.get(2, 4).abs() < 1e-12);
        assert!((rdm.get(0, 5) - 2.0).abs() < 1e-12);
        for i in 0..6 {
            assert_eq!(rdm.get(i, i), 0.0);
            for j in 0..6 {
                assert_eq!(rdm.get(i, j), rdm.get(j, i));
                if i != j {
                    let xi: Vec<f64> = x.row(i).iter().copied().collect();
                    let xj: Vec<f64> = x.row(j).iter().copied().collect();
                    let oracle = 1.0 - pearson(&xi, &xj).unwrap();
                    assert!((rdm.get(i, j) - oracle).abs() < 1e-12);
                }
            }
        }
        assert!(compute_rdm(&DMatrix::zeros(3, 1), &ids[..3]).is_err());
    }

    #[test]
    fn rsa_self_and_alignment() {
        let x = random(10, 5, 8);
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let rdm = compute_rdm(&x, &ids).unwrap();
        assert!((rsa_score(&rdm, &rdm, RankMethod::Spearman).unwrap() - 1.0).abs() < 1e-12);
        assert!((rsa_score(&rdm, &rdm, RankMethod::Kendall).unwrap() - 1.0).abs() < 1e-12);
        let mut other = rdm.clone();
        other.stimulus_ids.swap(0, 1);
        assert!(matches!(rsa_score(&rdm, &other, RankMethod::Spearman), Err(MetricsError::Alignment(_))));
    }

    #[test]
    fn column_mean_counts_undefined_as_zero() {
        let p = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 1.0, 1.0]);
        let t = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        let m = column_mean(&p, &t, pearson).unwrap();
        assert_eq!(m.n_undefined, 1);
        assert!((m.value - 0.5).abs() < 1e-15);
    }
}
