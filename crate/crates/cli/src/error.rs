use std::path::PathBuf;

use neuralign::analyses::AnalysisError;
use neuralign::synth::SynthError;
use neuralign::DataError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Exit status 1: the inputs or flags are wrong. 2: the run itself failed.
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Data(_) | CliError::Json { .. } => EXIT_VALIDATION,
            CliError::Synth(SynthError::Spec(_)) => EXIT_VALIDATION,
            CliError::Synth(SynthError::Data(e)) => data_code(e),
            CliError::Analysis(e) => match e.root() {
                AnalysisError::Parameter(_) | AnalysisError::Config(_) | AnalysisError::Alignment(_) => EXIT_VALIDATION,
                AnalysisError::Data(e) => data_code(e),
                _ => EXIT_RUNTIME,
            },
            CliError::Io { .. } | CliError::Pool(_) => EXIT_RUNTIME,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_VALIDATION => "validation",
            _ => "runtime",
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: String,
            exit_code: u8,
            #[serde(skip_serializing_if = "Option::is_none")]
            issues: Option<&'a [neuralign::ValidationIssue]>,
        }
        let issues = match self {
            CliError::Data(DataError::Invalid(i)) => Some(i.as_slice()),
            _ => None,
        };
        serde_json::to_string(&Payload {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
            issues,
        })
        .expect("error payload serializes")
    }
}

fn data_code(e: &DataError) -> u8 {
    match e {
        // Writing results is the only place an i/o failure is not about the inputs.
        DataError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => EXIT_RUNTIME,
        _ => EXIT_VALIDATION,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Data(DataError::Invariant("x".into())).exit_code(), 1);
        let numeric = AnalysisError::Stats(neuralign::StatsError::Parameter("x".into()));
        assert_eq!(CliError::Analysis(numeric).exit_code(), 2);
        let param = AnalysisError::Parameter("x".into());
        assert_eq!(CliError::Analysis(param).exit_code(), 1);
    }

    #[test]
    fn json_payload_is_one_line() {
        let e = CliError::Data(DataError::Invalid(vec![neuralign::ValidationIssue::new("E1", "a", "b")]));
        let s = e.to_json();
        assert!(!s.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["exit_code"], 1);
        assert_eq!(v["issues"][0]["code"], "E1");
    }
}
