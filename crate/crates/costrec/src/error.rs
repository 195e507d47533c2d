//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An instance component failed validation (negative probability, empty
    /// support, non-finite number, wrong table length, ...).
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// Exact enumeration was requested but some marginal has continuous
    /// support.
    #[error("exact mode requires discrete marginals, but agent {agent} has a continuous distribution")]
    NotDiscrete { agent: usize },

    /// Exact enumeration was requested but the joint support (or grid scan)
    /// exceeds the configured cap.
    #[error("support enumeration needs {needed} profiles, exceeding the cap of {cap}")]
    SupportTooLarge { needed: u128, cap: u128 },

    /// Exact evaluation was requested for an algorithm that does not expose a
    /// finite outcome distribution.
    #[error("exact mode requires a deterministic algorithm or one exposing a finite outcome distribution")]
    UnenumerableAlgorithm,

    /// Conditional sampling was asked to condition on an interval with zero
    /// prior mass.
    #[error("interval ({lo}, {hi}] has zero mass under the marginal of agent {agent}")]
    ZeroMassInterval { agent: usize, lo: f64, hi: f64 },

    /// Two curves on incompatible grids were compared.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A payment routine requires a monotone curve but the input dips.
    #[error("interim curve for agent {agent} is not monotone: drops by {drop} at cell {cell}")]
    NonMonotoneCurve { agent: usize, cell: usize, drop: f64 },

    /// The blatant-monotonization mixing weight is outside [0, 1].
    #[error("mixing weight gamma = {0} is outside [0, 1]")]
    GammaOutOfRange(f64),

    /// A mechanism served an agent whose interim allocation is zero, so the
    /// per-service price p/x is undefined.
    #[error("agent {agent} served at value {value} but interim allocation there is zero")]
    ZeroInterimServed { agent: usize, value: f64 },

    /// The binary-value reduction saw a value other than 0 or 1.
    #[error("binary-value reduction requires values in {{0, 1}}, got {value} for agent {agent}")]
    NonBinaryValuation { agent: usize, value: f64 },

    /// The support-list reduction saw a value not on the declared list.
    #[error("value {value} of agent {agent} is not on the declared support list")]
    ValueOutsideSupport { agent: usize, value: f64 },

    /// The harmonic-sum inequality requires every entry to be at least one.
    #[error("harmonic-sum check requires entries >= 1, got {value} at index {index}")]
    EntryBelowOne { index: usize, value: f64 },

    /// A reduction precondition failed (wrong flags, missing scale, ...).
    #[error("incompatible reduction: {0}")]
    Incompatible(String),

    /// The experiment config failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
