use thiserror::Error;

/// Errors raised by the density estimators and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("point ({0}, {1}) lies outside the closed wedge x1 <= x2")]
    OutsideWedge(f64, f64),
    #[error("unbounded drift unsupported by {0}")]
    UnboundedDrift(&'static str),
    #[error("term index {n} exceeds n_max = {n_max}")]
    TermIndexTooLarge { n: usize, n_max: usize },
    #[error("empty window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stability violation: {0}")]
    Stability(String),
    #[error("insufficient margin: {0}")]
    Margin(String),
    #[error("drift spec parse error: {0}")]
    DriftParse(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("nothing to plot")]
    NothingToPlot,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(t))
    }
}
