//! Error type shared by all modules.

use thiserror::Error;

/// Errors surfaced by the library. Numerical failures carry the offending
/// parameters so callers can report actionable diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: operands live on different grids ({0} vs {1} points per side)")]
    GridMismatch(usize, usize),

    #[error(
        "mollification scale under-resolved: epsilon = {epsilon} requires epsilon >= 2*spacing = {min_epsilon} (and < pi*M/2 = {max_epsilon} for compact support)"
    )]
    UnderResolvedMollifier {
        epsilon: f64,
        min_epsilon: f64,
        max_epsilon: f64,
    },

    #[error(
        "exponent overflow in Wick exponential: max |exponent| = {max_exponent:.3e} exceeds 700 (alpha = {alpha}, epsilon = {epsilon}); parameters are unresolved at this grid scale"
    )]
    ExponentOverflow {
        max_exponent: f64,
        alpha: f64,
        epsilon: f64,
    },

    #[error(
        "time step unstable: field norm {norm:.3e} after step {step} (dt = {dt}); reduce dt"
    )]
    UnstableStep { step: usize, dt: f64, norm: f64 },

    #[error("negativity violated: max Y = {max_y:.3e} > 1e-12 at step {step}")]
    NegativityViolated { step: usize, max_y: f64 },

    #[error("test vector not band-limited: mode ({jx}, {jy}) outside the order-{order} band carries amplitude {amplitude:.3e}")]
    OutsideBand {
        jx: i64,
        jy: i64,
        order: usize,
        amplitude: f64,
    },

    #[error("trajectory/step mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("too few dyadic levels: have {have}, need at least {need}")]
    TooFewLevels { have: usize, need: usize },

    #[error("Besov index violation: {0}")]
    IndexViolation(String),

    #[error("degenerate variance: statistic has zero spread over {n_samples} samples")]
    DegenerateVariance { n_samples: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
