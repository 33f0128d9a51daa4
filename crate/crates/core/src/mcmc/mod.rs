//! Metropolis-within-Gibbs sampling and posterior summaries.
//!
//! Models expose closed-form conditional draws through
//! [`Model::gibbs_sweep`]; every other free parameter is updated by an
//! adaptive random-walk Metropolis step on an unconstrained scale (log for
//! scales, logit for proportions). Step sizes adapt during burn-in only.

mod chains;
mod config;
mod diagnostics;
mod model;
mod sampler;

pub use chains::ChainSet;
pub use config::SamplerConfig;
pub use diagnostics::{
    effective_sample_size, quantile_type7, split_rhat, summarize, ParamSummary, PosteriorSummary,
};
pub use model::{ChainRng, Model, ParamSpec, Support};
pub use sampler::run_sampler;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McmcError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("log density at the initial state is not finite ({0})")]
    Initialization(f64),
    #[error("no proposal accepted for `{param}` during adaptation window ending at iteration {iteration}")]
    AdaptationFailure { param: String, iteration: usize },
    #[error("summary needs at least {needed} draws per parameter, found {found}")]
    TooFewDraws { needed: usize, found: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("i/o error: {0}")]
    Io(String),
}
