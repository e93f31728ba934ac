use thiserror::Error;

use crate::reglab::OscillationTrace;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("near field not integrable for linear interpolation: p = {p}, s = {s} requires p > 1/(1-s)")]
    NonIntegrableNearField { p: f64, s: f64 },

    #[error("exterior growth {growth} is not below the tail threshold {threshold}")]
    TailDivergence { growth: f64, threshold: f64 },

    #[error("test function does not touch from above at {point:?}: gap {gap:e}")]
    TouchViolation { point: [f64; 2], gap: f64 },

    #[error("point {point:?} has margin {margin:e} below the required {required:e}")]
    OutsideMargin { point: [f64; 2], margin: f64, required: f64 },

    #[error("sigma diverges: eta = {eta} must be below {threshold}")]
    DivergentSigma { eta: f64, threshold: f64 },

    #[error("constant selection failed: {0}")]
    SelectionFailed(String),

    #[error("degenerate scaling context: lambda and mu must be positive and finite")]
    DegenerateScaling,

    #[error("induction bound `{bound}` violated at {witness:?} by {excess:e}")]
    InductionViolation { bound: String, witness: [f64; 2], excess: f64 },

    #[error("integral diverges: partial sums fail the Cauchy test below scale {scale:e}")]
    DivergenceDetected { scale: f64 },

    #[error("solver diverged: residual {residual:e} exceeds 1e6 x initial {initial:e}")]
    Diverged { residual: f64, initial: f64 },

    #[error("solver stalled after {iterations} iterations ({halvings} consecutive step halvings)")]
    Stalled { iterations: usize, halvings: usize },

    #[error("oscillation {osc:e} at radius {radius:e} is below 10x the interpolation floor {floor:e}")]
    DegenerateFit { osc: f64, radius: f64, floor: f64 },

    #[error("hypothesis unverifiable at {point:?}: value {value:e} +- {error:e} straddles {bound:e}")]
    HypothesisUnverifiable { point: [f64; 2], value: f64, error: f64, bound: f64 },

    #[error("dyadic iteration broke down at level {level}: {reason}")]
    IterationBreakdown { level: usize, reason: String, trace: Box<OscillationTrace> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::NonIntegrableNearField { .. }
                | Error::TailDivergence { .. }
                | Error::TouchViolation { .. }
                | Error::OutsideMargin { .. }
                | Error::DegenerateScaling
                | Error::Config(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
