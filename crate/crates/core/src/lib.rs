//! Bayesian random-effects meta-analysis of treatment effects in a
//! biomarker-positive subgroup, pooling trials that report
//! biomarker-positive, biomarker-negative or biomarker-mixed results, plus
//! a survival-trial simulation harness for evaluating the models.

pub mod data;
pub mod datasets;
pub mod mcmc;
pub mod models;
pub mod priors;
pub mod report;
pub mod sim;
pub mod survival;

pub use data::{
    classify_blocks, parse_dataset, Block, BlockCounts, DataError, EffectEstimate, MetaDataset,
    ProportionPrior, StudyRecord,
};
pub use mcmc::{run_sampler, summarize, ChainSet, PosteriorSummary, SamplerConfig};
pub use models::{fit, fit_full, BoundModel, FitResult, ModelError, ModelKind};
pub use priors::{beta_from_counts, beta_from_moments, beta_from_range, HyperPriors, PriorError};
