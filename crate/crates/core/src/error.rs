use thiserror::Error;

/// Errors raised by the lattice solvers, samplers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument is invalid. The first field names the
    /// offending parameter.
    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("lattice mismatch: expected (d={expected_d}, L={expected_l}), got (d={got_d}, L={got_l})")]
    LatticeMismatch {
        expected_d: usize,
        expected_l: usize,
        got_d: usize,
        got_l: usize,
    },

    #[error("site {0:?} is not in the interior of the box")]
    NotInterior(Vec<i32>),

    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("time step {dt} violates the stability bound {bound}")]
    UnstableTimeStep { dt: f64, bound: f64 },

    #[error("state space too large: {0} configurations")]
    StateSpaceTooLarge(f64),

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("not enough samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },

    #[error("height band saturated: {fraction:.2e} of proposals hit the band edge")]
    BandSaturated { fraction: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. } | Error::BandSaturated { .. } | Error::TooFewSamples { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
