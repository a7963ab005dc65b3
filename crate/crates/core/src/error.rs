use std::fmt;

use thiserror::Error;

/// Pipeline stage an error originated from, used to tag errors bubbling up
/// through [`crate::test_engine::run_test`] and the clustering driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Bandwidth,
    Trends,
    Residuals,
    LongRun,
    Null,
    Diagnostic,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Bandwidth => "bandwidth selection",
            Stage::Trends => "trend estimation",
            Stage::Residuals => "residuals",
            Stage::LongRun => "long-run variance",
            Stage::Null => "null simulation",
            Stage::Diagnostic => "normal diagnostic",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {b} for series length {t}: need b in (0, 1] and T*b >= 2")]
    InvalidBandwidth { b: f64, t: usize },

    #[error("singular local design at u = {u}")]
    SingularDesign { u: f64 },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("non-positive value under log transform (series {series}, time {time})")]
    NonPositiveUnderLog { series: usize, time: usize },

    #[error("aggregation period {period} does not divide series length {len}")]
    AggregationMismatch { period: usize, len: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("window of {size} points too small for lag {lag} at u = {u}")]
    WindowTooSmall { u: f64, size: usize, lag: usize },

    #[error("GCV score undefined at b = {b}: trace(H) = {trace} >= T = {t}")]
    UndefinedGcv { b: f64, trace: f64, t: usize },

    #[error("covariance factorization failed even with ridge {ridge}")]
    Factorization { ridge: f64 },

    #[error("no candidate bandwidth produced a defined GCV score")]
    NoValidCandidate,

    #[error("long-run variance must be nonnegative and finite (found {value} at u = {u})")]
    NonPositiveLongRun { u: f64, value: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
