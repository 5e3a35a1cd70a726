use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("path-loss exponent is unidentifiable at known distance {0} m")]
    UnidentifiableExponent(f64),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("tick {tick} (t = {t:.3} s): {source}")]
    Tick {
        tick: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("training failed: {0}")]
    Training(String),

    #[error("bad data in row {row}: {reason}")]
    Data { row: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error(transparent)]
    Wire(#[from] crate::netsim::WireError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_tick(self, tick: usize, t: f64) -> Self {
        Error::Tick {
            tick,
            t,
            source: Box::new(self),
        }
    }
}
