use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report. Variant names follow the error
/// codes surfaced by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("SCHEDULE_LENGTH: schedule has {0} entries, expected 37")]
    ScheduleLength(usize),
    #[error("SCHEDULE_ORDER: timestamp {next} at entry {index} does not follow {prev}")]
    ScheduleOrder { index: usize, prev: usize, next: usize },
    #[error("SCHEDULE_RANGE: timestamp {index} is outside a series of {nt} samples")]
    ScheduleRange { index: usize, nt: usize },
    #[error("SCHEDULE_MISSING_CLASS: no stimulus with label {0}")]
    ScheduleMissingClass(u8),

    #[error("NEGATIVE_TIME: hemodynamic response queried at t = {0}")]
    NegativeTime(f64),

    #[error("IO_ERROR: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("BAD_MAGIC: {0} is not a vol4d file")]
    BadMagic(PathBuf),
    #[error("DIM_MISMATCH: header declares {expected} samples, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("BAD_HEADER: {0}")]
    BadHeader(String),
    #[error("COORD_OUT_OF_RANGE: ({x},{y},{z}) outside volume")]
    CoordOutOfRange { x: usize, y: usize, z: usize },
    #[error("LENGTH_MISMATCH: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("NON_FINITE: {0}")]
    NonFinite(&'static str),

    #[error("TOO_SHORT: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("DEGENERATE_SERIES: standard deviation {0:e} below 1e-12")]
    DegenerateSeries(f64),
    #[error("TOO_LONG: series of length {len} exceeds target {target}")]
    TooLong { len: usize, target: usize },
    #[error("EMPTY: {0}")]
    Empty(&'static str),

    #[error("SHAPE_MISMATCH: {0}")]
    ShapeMismatch(String),
    #[error("BAD_RATE: dropout rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("STATE_SHAPE_MISMATCH: optimizer state does not match parameters")]
    StateShapeMismatch,
    #[error("BAD_CHECKPOINT: {0}")]
    BadCheckpoint(String),

    #[error("EMPTY_SPLIT: {0} split has no samples")]
    EmptySplit(&'static str),
    #[error("SINGLE_CLASS_TRAIN: training split contains a single class")]
    SingleClassTrain,
    #[error("TOO_FEW_GROUPS: {groups} trial groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("UNKNOWN_CLASS: label {0} is not one of the model's classes")]
    UnknownClass(u8),

    #[error("SINGLE_CLASS: boosting needs at least two classes")]
    SingleClass,
    #[error("EMPTY_ENSEMBLE: ensemble has no stumps")]
    EmptyEnsemble,

    #[error("TOO_FEW_POINTS: t-SNE needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("DEGENERATE: all input points are identical")]
    Degenerate,

    #[error("BAD_CONFIG: {0}")]
    BadConfig(String),
    #[error("BAD_RECORD: {0}")]
    BadRecord(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
