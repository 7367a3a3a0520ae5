use thiserror::Error;

/// Errors shared across the estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group {0} has no observations")]
    EmptyGroup(u8),
    #[error("observation {index} has negative or non-finite time {time}")]
    NegativeTime { index: usize, time: f64 },
    #[error("observation {index} has group label {label}, expected 0 or 1")]
    NonBinaryGroup { index: usize, label: i64 },
    #[error("empty input")]
    EmptyInput,
    #[error("group {group} has {n} observations, need at least {min}")]
    GroupTooSmall { group: u8, n: usize, min: usize },
    #[error("no orderable cross-group pair")]
    NoOrderablePairs,
    #[error(
        "censoring-survival weight vanished at time {time} (G0*G1 = {product:.3e}); \
         follow-up is insufficient for the plain estimator"
    )]
    ZeroCensoringWeight { time: f64, product: f64 },
    #[error("no events in the data")]
    NoEvents,
    #[error("maximum-likelihood fit did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("time {0} is not strictly positive, required by the chosen family")]
    NonPositiveTime(f64),
    #[error("quadrature failed to reach the requested tolerance")]
    QuadratureFailure,
    #[error("no orderable cross-group pair has min time beyond t0 = {0}")]
    NoPairsBeyondT0(f64),
    #[error("t* = {tstar} exceeds the largest observation {ymax}, which is an event")]
    TStarTooLarge { tstar: f64, ymax: f64 },
    #[error("restricted-estimator denominator is degenerate (no events)")]
    DegenerateDenominator,
    #[error("variance estimate is zero; test statistic undefined")]
    ZeroVariance,
    #[error("{failed} of {total} bootstrap resamples failed (> 5% allowed)")]
    TooManyResampleFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
