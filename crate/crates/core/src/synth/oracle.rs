use crate::metrics::{self, MetricsError};

pub const RANK_ORACLE_MAX_LEN: usize = 12;

/// Spearman rho and Kendall tau-b by direct definition.
///
/// Mid-ranks are counted pairwise (`#less + (#equal + 1) / 2`) and tau-b
/// enumerates every pair. Meant as a test oracle for short inputs.
pub fn rank_oracle(x: &[f64], y: &[f64]) -> Result<(f64, f64), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::Length(format!("{} vs {}", x.len(), y.len())));
    }
    if x.len() > RANK_ORACLE_MAX_LEN {
        return Err(MetricsError::Parameter(format!(
            "rank oracle handles at most {RANK_ORACLE_MAX_LEN} values, got {}",
            x.len()
        )));
    }
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count();
                let equal = v.iter().filter(|b| *b == a).count();
                less as f64 + (equal + 1) as f64 / 2.0
            })
            .collect()
    };
    let rho = metrics::pearson(&rank(x), &rank(y))?;

    let n = x.len();
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).expect("finite input");
            let dy = y[i].partial_cmp(&y[j]).expect("finite input");
            use std::cmp::Ordering::Equal;
            match (dx == Equal, dy == Equal) {
                (true, true) => {
                    tie_x += 1;
                    tie_y += 1;
                }
                (true, false) => tie_x += 1,
                (false, true) => tie_y += 1,
                (false, false) if dx == dy => conc += 1,
                (false, false) => disc += 1,
            }
        }
    }
    let n0 = (n * n.saturating_sub(1) / 2) as u64;
    let (untied_x, untied_y) = (n0 - tie_x, n0 - tie_y);
    if untied_x == 0 || untied_y == 0 {
        return Err(MetricsError::Undefined("all pairs tied in one input"));
    }
    let tau = (conc - disc) as f64 / ((untied_x as f64) * (untied_y as f64)).sqrt();
    Ok((rho, tau))
}
