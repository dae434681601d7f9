use thiserror::Error;

/// Errors raised by the models, solver, simulator and input parsers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid slot: {field} = {value} ({reason})")]
    InvalidSlot {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("state of charge out of range: {0}")]
    SocOutOfRange(f64),
    #[error("negative duration: departure {t_dep} precedes start {t_s}")]
    NegativeDuration { t_dep: i64, t_s: i64 },
    #[error("empty charging period")]
    EmptyPeriod,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("oracle instance too large: {cells} decision cells (limit {limit})")]
    InstanceTooLarge { cells: usize, limit: usize },
    #[error("no feasible grid point")]
    NoFeasibleGridPoint,
    #[error("soc overflow for vehicle {vehicle}: {soc}")]
    SocOverflow { vehicle: String, soc: f64 },
    #[error("unmatched departure for vehicle {0}")]
    UnmatchedDeparture(String),
    #[error("price-gap: {0}")]
    PriceGap(String),
    #[error("empty price series")]
    EmptySeries,
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("invalid timestamp {value:?}: {message}")]
    Timestamp { value: String, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
