use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// One row of a benchmark-score file (`model_id,task,score`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub model_id: String,
    pub task: String,
    pub score: f64,
}

/// Parses benchmark scores, rejecting non-finite scores and repeated `(model_id, task)` pairs.
pub fn read_benchmark_scores(reader: impl Read) -> Result<Vec<BenchmarkScore>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in rdr.deserialize::<BenchmarkScore>() {
        let row = row.map_err(|e| DataError::Csv(e.to_string()))?;
        if !row.score.is_finite() {
            return Err(DataError::Invariant(format!("score of {} on {} is not finite", row.model_id, row.task)));
        }
        if !seen.insert((row.model_id.clone(), row.task.clone())) {
            return Err(DataError::DuplicateId(format!("{}/{}", row.model_id, row.task)));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn load_benchmark_scores(path: impl AsRef<Path>) -> Result<Vec<BenchmarkScore>, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_benchmark_scores(file)
}
