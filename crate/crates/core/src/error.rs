use thiserror::Error;

/// Errors raised by the key-rate engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or argument lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    Domain(String),

    /// A quantity that must hold by construction (normalization, positivity)
    /// was violated beyond round-off.
    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    /// An integrand produced NaN or an infinity.
    #[error("non-finite integrand value {value} at beta = ({x}, {p})")]
    NonFinite { value: f64, x: f64, p: f64 },

    /// The Hermitian eigensolver did not reach its tolerance.
    #[error("eigensolver did not converge: dim {dim}, {iterations} iterations, residual {residual:e}{location}")]
    EigenConvergence {
        dim: usize,
        iterations: usize,
        residual: f64,
        location: String,
    },

    /// Root bracketing failed: the function has the same sign at both ends.
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
