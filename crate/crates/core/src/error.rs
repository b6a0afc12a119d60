use std::path::PathBuf;

use thiserror::Error;

use crate::model::OrientationClass;

/// Errors produced by the spectral, perturbative and dynamics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{operation} is not defined for {orientation:?} tilt directions")]
    UnsupportedOrientation {
        operation: &'static str,
        orientation: OrientationClass,
    },

    #[error("Hermitian eigensolver failed to converge (dimension {dim})")]
    EigenSolver { dim: usize },

    #[error(
        "band tracking is ambiguous at kappa = {kappa}: candidates {first} and {second} \
         are equally close to the prediction; refine the kappa grid"
    )]
    TrackingAmbiguity { kappa: f64, first: f64, second: f64 },

    #[error("tracked band does not close over the Brillouin zone (start {start}, end {end})")]
    TrackingNotPeriodic { start: f64, end: f64 },

    #[error(
        "band width not converged in the chain truncation: \
         J = {small_range} gives {small_width:e}, J = {large_range} gives {large_width:e}"
    )]
    NotConverged {
        small_range: usize,
        small_width: f64,
        large_range: usize,
        large_width: f64,
    },

    #[error("no kappa-dependent first-order term exists up to order {max_order}")]
    NoDispersiveTerm { max_order: u32 },

    #[error("wavepacket reached the patch boundary: amplitude {amplitude:e} at t = {time}")]
    BoundaryContamination { time: f64, amplitude: f64 },

    #[error("norm drift {drift:e} exceeds tolerance at t = {time}")]
    NormDrift { time: f64, drift: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
