use std::path::PathBuf;

use thiserror::Error;

use crate::period::Period;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record for country {country} at {period}: {reason}")]
    MalformedRecord {
        country: String,
        period: Period,
        reason: String,
    },

    #[error("period {0} has no observations")]
    EmptyPeriod(Period),

    #[error("panel is empty: {0}")]
    EmptyPanel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing tariff for country {country} at {period}")]
    MissingTariff { country: String, period: Period },

    #[error("no schedule entry matches country {country}, item {item}, month {period}")]
    UnmatchedSchedule {
        country: String,
        item: u16,
        period: Period,
    },

    #[error("schedule entries {first} and {second} tie at priority {priority} for country {country}, item {item}, month {period}")]
    AmbiguousSchedule {
        first: usize,
        second: usize,
        priority: i32,
        country: String,
        item: u16,
        period: Period,
    },

    #[error("quota ledger for {quota}: month {month} fed after {last}")]
    OutOfSequence {
        quota: String,
        month: Period,
        last: Period,
    },

    #[error("boundary already scaled for carcass content")]
    AlreadyScaled,

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("invalid or weak instruments: {0}")]
    InvalidInstruments(String),

    #[error("first-stage aggregates undefined: {0}")]
    UndefinedAggregate(String),

    #[error("year {year} is missing months {months:?}")]
    MissingMonths { year: i32, months: Vec<u32> },

    #[error("series too short: {len} observations, at least {required} required")]
    SeriesTooShort { len: usize, required: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
