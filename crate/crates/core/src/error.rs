use thiserror::Error;

/// Which physical limit an action crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    ChargeLimit,
    DischargeLimit,
    SocUpper,
    SocLower,
    DemandCap,
    DemandFloor,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Bound::ChargeLimit => "charge power limit",
            Bound::DischargeLimit => "discharge power limit",
            Bound::SocUpper => "state of charge upper bound (capacity)",
            Bound::SocLower => "state of charge lower bound (empty)",
            Bound::DemandCap => "demand cap",
            Bound::DemandFloor => "demand floor (zero)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible action: {bound} violated ({detail})")]
    Infeasible { bound: Bound, detail: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
