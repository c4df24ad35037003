use thiserror::Error;

/// Errors raised by any stage of the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point set is empty")]
    EmptyPointSet,

    #[error("rows have inconsistent length: expected {expected}, row {row} has {found}")]
    RaggedRows {
        expected: usize,
        row: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("k = {k} exceeds the number of available points ({available})")]
    KTooLarge { k: usize, available: usize },

    #[error("row id {id} is out of range for {n} points")]
    InvalidRow { id: usize, n: usize },

    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("response vector has {found} entries, expected {expected}")]
    ResponseLength { expected: usize, found: usize },

    #[error("need at least {needed} observations, got {found}")]
    TooFewObservations { needed: usize, found: usize },

    #[error("coordinate {coord} is constant and cannot be standardized")]
    DegenerateCoordinate { coord: usize },

    #[error("no data point has positive kernel weight{}", fmt_row(*.row))]
    NoSupport { row: Option<usize> },

    #[error("k = {k} is outside [3, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("every block point has degenerate neighbor distances")]
    AllPointsDegenerate,

    #[error("invalid bandwidth grid: {0}")]
    BadGrid(String),

    #[error("bandwidth {h} is infeasible: {reason}")]
    Infeasible { h: f64, reason: String },

    #[error("no candidate bandwidth is feasible")]
    NoFeasibleBandwidth,

    #[error("block of {block} points requested from {n} observations")]
    BlockTooLarge { block: usize, n: usize },

    #[error("block is invalid: {0}")]
    InvalidBlock(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn fmt_row(row: Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPointSet => "EmptyPointSet",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::NonFinite { .. } => "NonFinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::InvalidRow { .. } => "InvalidRow",
            Error::NonPositiveBandwidth(_) => "NonPositiveBandwidth",
            Error::NonPositiveRadius(_) => "NonPositiveRadius",
            Error::ResponseLength { .. } => "ResponseLength",
            Error::TooFewObservations { .. } => "TooFewObservations",
            Error::DegenerateCoordinate { .. } => "DegenerateCoordinate",
            Error::NoSupport { .. } => "NoSupport",
            Error::KOutOfRange { .. } => "KOutOfRange",
            Error::AllPointsDegenerate => "AllPointsDegenerate",
            Error::BadGrid(_) => "BadGrid",
            Error::Infeasible { .. } => "Infeasible",
            Error::NoFeasibleBandwidth => "NoFeasibleBandwidth",
            Error::BlockTooLarge { .. } => "BlockTooLarge",
            Error::InvalidBlock(_) => "InvalidBlock",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
