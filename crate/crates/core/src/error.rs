use thiserror::Error;

/// Errors raised by the simulation and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("drift must be nonzero for this operation (got λ = 0); the exponential and flat parts are not separately identifiable")]
    ZeroDrift,

    #[error("drift must be positive for this operation (got λ = {0}); reflect x ↦ −x first")]
    NegativeDrift(f64),

    #[error("regions degenerate: t = {t} must exceed λ^(-1/(1-α)) = {threshold}")]
    DegenerateRegions { t: f64, threshold: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error} > tolerance {tolerance}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("truncation bound not met: tail estimate {tail} exceeds tolerance {tolerance}")]
    Truncation { tail: f64, tolerance: f64 },

    #[error("padding failed: leak {leak} still above ε = {epsilon} at maximum radius {radius}")]
    Padding {
        leak: f64,
        epsilon: f64,
        radius: f64,
    },

    #[error("window [{lo}, {hi}] is not contained in configuration window [{outer_lo}, {outer_hi}]")]
    WindowNotContained {
        lo: f64,
        hi: f64,
        outer_lo: f64,
        outer_hi: f64,
    },

    #[error("test function support [{lo}, {hi}] exceeds the exactness window [{window_lo}, {window_hi}]")]
    SupportViolation {
        lo: f64,
        hi: f64,
        window_lo: f64,
        window_hi: f64,
    },

    #[error("dense-part fluctuation bound {bound} exceeds tolerance {tolerance}; raise the explicit atom budget")]
    DenseCertificate { bound: f64, tolerance: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite (got {value})")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite (got {value})")))
    }
}

pub(crate) fn ensure_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be nonnegative and finite (got {value})")))
    }
}
