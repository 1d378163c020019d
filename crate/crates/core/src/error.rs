use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("all amplitudes are zero; cannot normalize")]
    ZeroState,

    #[error("state is not normalized: squared norm is {norm_sqr}")]
    NotNormalized { norm_sqr: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("insufficient shots for {what}: need at least {required}, got {got}")]
    InsufficientShots {
        what: &'static str,
        required: u64,
        got: u64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state has nonzero |00> or |11> amplitude; the single-atom scheme needs a single-excitation state")]
    NotSingleExcitation,
}

pub type Result<T> = std::result::Result<T, Error>;
