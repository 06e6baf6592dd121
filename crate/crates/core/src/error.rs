use thiserror::Error;

/// Errors raised by model construction, analysis and design routines.
///
/// Cell and ramp indices carried by the variants are 1-based, matching the
/// numbering used in configuration files and reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("mainline ratio of interior cell {cell} is zero")]
    DivisionByZeroRatio { cell: usize },

    #[error("singular capacity chain: {0}")]
    SingularChain(String),

    #[error("queued lower bound of cell {cell} has no root in [0, jam density]")]
    NoRoot { cell: usize },

    #[error("weight of cell {cell} has a zero-width support")]
    DegenerateWeight { cell: usize },

    #[error("inner maximization has {free} free densities, exact limit is {limit} and no fallback is configured")]
    Unsupported { free: usize, limit: usize },

    #[error("full coordination supports at most {limit} cells on the exact path, got {cells}")]
    TooLarge { cells: usize, limit: usize },

    #[error("design grid has {points} candidates, above the cap of {cap}")]
    GridTooLarge { points: u64, cap: u64 },

    #[error("partial coordination stage for ramp {ramp} is infeasible (best mean drift {best})")]
    SubproblemInfeasible { ramp: usize, best: f64 },

    #[error("output failed: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
