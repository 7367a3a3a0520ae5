//! Two-sample inference built on Kendall's tau between a binary group label
//! and a possibly right-censored outcome.
//!
//! The association measure is
//! `tau_b = P(concordant) - P(discordant)` over cross-group pairs: zero means
//! neither group tends to have larger outcomes, which is weaker than equality
//! of the two distributions and remains meaningful when survival curves
//! cross. The crate provides:
//!
//! - complete-data estimators (the WMW statistic, tau-a, tau-b) with exact
//!   finite-n and asymptotic variances under fixed and random group sizes
//!   ([`complete`]);
//! - an inverse-probability-of-censoring-weighted tau-b for right-censored
//!   data with analytic variances under both designs ([`censored`]);
//! - the weighted-log-rank family (log-rank, Gehan, and the adaptive
//!   tau-based weight) in integral, rank-score and pairwise forms, plus a
//!   delayed-effect variant ([`wlr`]);
//! - tail remedies for insufficient follow-up: the restricted estimator,
//!   parametric tail imputation and bootstrap variances ([`tail`]);
//! - Wald tests and confidence intervals with a follow-up diagnostic
//!   ([`inference`]);
//! - a deterministic, parallel Monte Carlo harness for coverage, power,
//!   null-distribution and tail-imputation studies ([`sim`]).

pub mod censored;
pub mod complete;
pub mod data;
pub mod error;
pub mod inference;
pub mod quad;
pub mod sim;
pub mod stepfun;
pub mod tail;
pub mod wlr;

pub use data::{
    GroupingDesign, Observation, TauEstimate, TauKind, TwoSampleData, VarianceComponents,
};
pub use error::{Error, Result};
