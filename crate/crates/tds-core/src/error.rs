use std::fmt;

/// Error type shared by the delay-system crates.
#[derive(Debug)]
pub enum Error {
    /// Invalid argument (wrong count, bad parameter value, ...).
    Argument(String),
    /// Inconsistent matrix or vector dimensions.
    Dimension(String),
    /// A size cap was exceeded.
    Capacity(String),
    /// A numerical routine failed or did not meet its tolerance.
    Numerical {
        message: String,
        /// Condition-number estimate of the offending operator, when one
        /// was computed.
        condition: Option<f64>,
    },
    /// An operation that requires a stable system was given an unstable one.
    Unstable { radius: f64 },
    Io(std::io::Error),
    /// Malformed model file.
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(m) => write!(f, "invalid argument: {m}"),
            Error::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            Error::Capacity(m) => write!(f, "capacity exceeded: {m}"),
            Error::Numerical { message, condition } => {
                write!(f, "numerical failure: {message}")?;
                if let Some(c) = condition {
                    write!(f, " (condition estimate {c:.3e})")?;
                }
                Ok(())
            }
            Error::Unstable { radius } => {
                write!(f, "system is not exponentially stable (spectral radius {radius})")
            }
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Format(m) => write!(f, "malformed model file: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
