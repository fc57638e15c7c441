use thiserror::Error;

/// Unified error type for the toolkit.
///
/// Configuration problems (bad parameters, mismatched bases, violated
/// hypothesis gates) are reported before any work starts; numerical
/// failures (blow-up, non-SPD covariance) carry enough context to locate
/// the offending step.
#[derive(Debug, Error)]
pub enum SkramError {
    /// Invalid construction or configuration parameter.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two objects built over different spectral bases were combined.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// Input outside its mathematical domain (e.g. evaluation point off the interval).
    #[error("domain error: {0}")]
    Domain(String),

    /// A trajectory exceeded the blow-up threshold.
    #[error("blow-up at step {step}: |coeffs|_inf = {magnitude:.3e} exceeds 1e12")]
    BlowUp { step: usize, magnitude: f64 },

    /// A theorem precondition encoded as a covariance hypothesis flag failed.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// Internal numerical failure (quadrature non-convergence, non-SPD covariance, ...).
    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SkramError>;
