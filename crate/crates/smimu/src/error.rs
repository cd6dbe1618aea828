//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("array must contain an even number of IMUs, got {0}")]
    OddArraySize(usize),

    #[error("IMU {id} has no mirror partner within {eps} m")]
    UnpairedImu { id: u32, eps: f64 },

    #[error("invalid IMU placement for id {id}: {detail}")]
    InvalidPlacement { id: u32, detail: String },

    #[error("normal matrix is singular (condition number {cond:.3e})")]
    SingularNormalMatrix { cond: f64 },

    #[error("joint gyro-free solve requires at least 6 IMUs, got {0}")]
    TooFewImus(usize),

    #[error("angular solve is rank-deficient after regularization (condition {cond:.3e})")]
    RankDeficient { cond: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("innovation covariance is singular (condition number {cond:.3e})")]
    SingularInnovation { cond: f64 },

    #[error("body rate magnitude {magnitude:.3} rad/s exceeds saturation limit {limit} rad/s")]
    BodyRateSaturation { magnitude: f64, limit: f64 },

    #[error("invalid motion profile: {0}")]
    InvalidProfile(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("clock gap of {gap_periods:.1} sample periods in {stream} exceeds limit of {limit}")]
    ClockGapExceeded {
        stream: String,
        gap_periods: f64,
        limit: f64,
    },

    #[error("schema mismatch in {path}: {detail}")]
    SchemaMismatch { path: PathBuf, detail: String },

    #[error("estimate and truth streams do not overlap in time")]
    NoOverlap,

    #[error("no aligned estimate/truth pairs to score")]
    EmptyPairing,

    #[error("compare inputs differ across modes: {0}")]
    MismatchedInputs(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for configuration/input validation problems,
    /// 3 for runtime numeric or i/o failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OddArraySize(_)
            | Error::UnpairedImu { .. }
            | Error::InvalidPlacement { .. }
            | Error::TooFewImus(_)
            | Error::InvalidProfile(_)
            | Error::MissingFile(_)
            | Error::SchemaMismatch { .. }
            | Error::ClockGapExceeded { .. }
            | Error::MismatchedInputs(_)
            | Error::Config(_) => 2,
            _ => 3,
        }
    }
}
