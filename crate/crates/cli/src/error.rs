use std::fmt;

use sardespeckle::Error as CoreError;

/// Failure classes, each with a stable exit code and a one-word tag that
/// starts the single-line diagnostic on stderr.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage | ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    /// Core errors are data errors unless they come from the numerics.
    pub fn from_core(err: CoreError) -> Self {
        let kind = if err.is_numerical() { ErrorKind::Numerical } else { ErrorKind::Data };
        Self::new(kind, err.to_string())
    }

    /// For core errors raised while validating configuration values.
    pub fn config_from_core(err: CoreError) -> Self {
        Self::config(err.to_string())
    }

    pub fn prefixed(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }

    pub fn with_context(self, path: &std::path::Path) -> Self {
        let context = path.display().to_string();
        if self.message.contains(&context) {
            self
        } else {
            self.prefixed(&context)
        }
    }

    /// The diagnostic line: `error[<tag>]: <message>` with newlines folded.
    pub fn line(&self) -> String {
        let flat: Vec<&str> = self.message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        format!("error[{}]: {}", self.kind.tag(), flat.join(" | "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        Self::from_core(err)
    }
}
