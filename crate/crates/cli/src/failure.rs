use std::fmt;

/// A failed stage, reported as one machine-parseable line.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(stage: &'static str, kind: impl Into<String>, message: impl Into<String>) -> Self {
        Failure {
            stage,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn line(&self) -> String {
        let escaped = self.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error stage={} kind={} message=\"{escaped}\"", self.stage, self.kind)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed ({}): {}", self.stage, self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

/// Tags a library or I/O error with the stage it came from.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for splatsim_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(stage, e.kind(), e.to_string()))
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(stage, "io", e.to_string()))
    }
}
