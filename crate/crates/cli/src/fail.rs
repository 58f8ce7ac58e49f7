//! Exit codes: 0 ok, 1 configuration or usage, 2 writing output, 3 missing
//! or corrupt input.

use std::fmt;

use ttdf_core::Error;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn output(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Attaches an exit code to library errors depending on whether the failing
/// I/O was reading inputs or writing outputs.
pub trait Classify<T> {
    fn reading(self, what: &str) -> Result<T, Failure>;
    fn writing(self, what: &str) -> Result<T, Failure>;
}

fn classify(e: Error, what: &str, io_code: u8) -> Failure {
    let code = match e {
        Error::InvalidArgument(_) => 1,
        Error::Format(_) | Error::Missing(_) => 3,
        Error::Io(_) => io_code,
    };
    Failure { code, message: format!("{what}: {e}") }
}

impl<T> Classify<T> for ttdf_core::Result<T> {
    fn reading(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| classify(e, what, 3))
    }

    fn writing(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| classify(e, what, 2))
    }
}

impl<T> Classify<T> for std::io::Result<T> {
    fn reading(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::input(format!("{what}: {e}")))
    }

    fn writing(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::output(format!("{what}: {e}")))
    }
}
