//! Active learning for binary classification with a reject option.
//!
//! The learner may output `0`, `1`, or abstain. Three interaction regimes are
//! covered, each built on the same hierarchical refinement of the unit cube:
//!
//! - [`fixed_cost`] — abstaining costs a known `lambda` per use;
//! - [`known_marginal`] — abstention rate bounded by `delta`, input marginal known exactly;
//! - [`unlabelled`] — abstention rate bounded by `delta`, marginal estimated from
//!   on-demand unlabelled samples.
//!
//! Supporting pieces: [`partition`] (tree of partitions over `[0,1]^D`),
//! [`problems`] (synthetic instances with analytic ground truth), [`oracle`]
//! (membership / pool / stream query models), [`estimate`] (per-cell confidence
//! machinery), [`adaptive`] (smoothness-adaptive variant), [`glm`]
//! (generalized-linear reduction), and [`risk`] (reference classifiers, risk
//! functionals, rate fitting).

pub mod adaptive;
pub mod classifier;
pub mod engine;
pub mod estimate;
pub mod fixed_cost;
pub mod glm;
pub mod known_marginal;
pub mod oracle;
pub mod partition;
pub mod problems;
pub mod risk;
pub mod trace;
pub mod unlabelled;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point lies outside the unit cube")]
    OutOfDomain,
    #[error("label budget exhausted")]
    BudgetExhausted,
    #[error("no data available: {0}")]
    NoData(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),
    #[error("query model not supported here: {0}")]
    UnsupportedModel(String),
    #[error("quality audit failed: {0}")]
    QualityAudit(String),
    #[error("insufficient budget: {0}")]
    InsufficientBudget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
