use std::fmt;

/// Where in an input a rejected record sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    /// 1-based line in a text file.
    Line(u64),
    /// 0-based element of a JSON array.
    Record(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Record(i) => write!(f, "record {i}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A single input row failed validation.
    #[error("{location}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
    Parse {
        location: Location,
        field: Option<String>,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("column `{0}` is collinear with the other regressors")]
    RankDeficient(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}): {context}")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(location: Location, field: Option<&str>, message: impl Into<String>) -> Self {
        Error::Parse {
            location,
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::RankDeficient(_) | Error::NonConvergence { .. } | Error::Numerical(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
