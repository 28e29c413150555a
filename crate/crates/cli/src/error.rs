use std::fmt;

/// Process exit codes.
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// A failed command with the exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn schema(message: impl Into<String>) -> Self {
        Self { code: EXIT_SCHEMA, message: message.into() }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self { code: EXIT_DOMAIN, message: message.into() }
    }

    /// Wraps a core error, prefixing `context`.
    pub fn core(context: impl fmt::Display, error: tdvmm::Error) -> Self {
        let code = if error.is_numerical() { EXIT_NUMERICAL } else { EXIT_DOMAIN };
        Self { code, message: format!("{context}: {error}") }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;
