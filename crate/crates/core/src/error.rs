//! Shared error type for the whole library.

use thiserror::Error;

/// Errors surfaced by graph construction, solvers, and game evaluation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A size parameter is outside its allowed range.
    #[error("{what} = {value} out of range [{min}, {max}]")]
    Size {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    /// The graph violates a structural requirement (degrees, labels, connectivity).
    #[error("structural error: {0}")]
    Structure(String),

    /// An enumeration or search exceeded its configured budget.
    #[error("{what} exceeded capacity {cap} (reached {reached})")]
    Capacity {
        what: &'static str,
        reached: usize,
        cap: usize,
    },

    /// An argument refers to something outside the object's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric computation failed to meet its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An evaluation point is outside the valid range (time window, singularity).
    #[error("range error: {0}")]
    Range(String),

    /// A game strategy broke the protocol.
    #[error("protocol violation at step {step}: investor prediction {value} outside [-1, 1]")]
    Protocol { step: usize, value: f64 },

    /// Random instance generation ran out of retries.
    #[error("generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    /// A configuration file or parameter record failed validation.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
