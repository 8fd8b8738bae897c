//! Errors reported on stderr as one JSON line: `{"error": kind, "message": ...}`.

use meshsplat_core::Error;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Failure {
    pub error: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn line(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::MouthClosure(_) => "mouth_closure",
            Error::EmptyCoverage { .. } => "empty_coverage",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite { .. } => "non_finite",
            Error::ForwardStateMismatch(_) => "forward_state",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::ConfigHashMismatch { .. } => "config_hash_mismatch",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Image { .. } => "image",
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<meshsplat_client::ClientError> for Failure {
    fn from(e: meshsplat_client::ClientError) -> Self {
        Failure::new("remote", e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_are_one_json_line() {
        let f: Failure = Error::InvalidArgument("two\nlines".into()).into();
        let line = f.line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "invalid_argument");
        assert_eq!(v["message"], "invalid argument: two\nlines");
    }
}
