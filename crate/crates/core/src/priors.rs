//! Hyperpriors for the meta-analysis models and method-of-moments beta
//! priors for the proportion of biomarker-negative patients.

use thiserror::Error;

use crate::data::ProportionPrior;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("mean {0} must lie strictly inside (0, 1)")]
    MeanOutOfRange(f64),
    #[error("variance {variance} must be positive")]
    NonPositiveVariance { variance: f64 },
    #[error("variance too large for beta: {variance} >= mean*(1-mean) = {limit}")]
    VarianceTooLarge { variance: f64, limit: f64 },
    #[error("degenerate proportion {n_negative}/{n_known}: need 0 < negatives < known")]
    DegenerateProportion { n_negative: u64, n_known: u64 },
    #[error("range ({low}, {high}) must satisfy 0 < low < high < 1")]
    BadRange { low: f64, high: f64 },
    #[error("hyperprior `{name}` must be positive and finite, got {value}")]
    BadHyperprior { name: &'static str, value: f64 },
}

/// Priors on the pooled means and between-study scales.
///
/// The half-normal priors are parameterized by the standard deviation of
/// the underlying normal, so `tau_pos_scale = 10` is `HN(0, 10^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPriors {
    pub d_pos_mean: f64,
    pub d_pos_sd: f64,
    pub tau_pos_scale: f64,
    pub mu_beta_mean: f64,
    pub mu_beta_sd: f64,
    pub tau_beta_scale: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            d_pos_mean: 0.0,
            d_pos_sd: 100.0,
            tau_pos_scale: 10.0,
            mu_beta_mean: 0.0,
            mu_beta_sd: 100.0,
            tau_beta_scale: 10.0,
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<(), PriorError> {
        let checks = [
            ("d_pos_sd", self.d_pos_sd),
            ("tau_pos_scale", self.tau_pos_scale),
            ("mu_beta_sd", self.mu_beta_sd),
            ("tau_beta_scale", self.tau_beta_scale),
        ];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(PriorError::BadHyperprior { name, value });
            }
        }
        for (name, value) in [("d_pos_mean", self.d_pos_mean), ("mu_beta_mean", self.mu_beta_mean)] {
            if !value.is_finite() {
                return Err(PriorError::BadHyperprior { name, value });
            }
        }
        Ok(())
    }
}

/// Beta distribution with the given mean and variance.
///
/// With `s = m(1-m)/v - 1` the shapes are `alpha = m s` and `beta = (1-m) s`.
pub fn beta_from_moments(mean: f64, variance: f64) -> Result<ProportionPrior, PriorError> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(PriorError::MeanOutOfRange(mean));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(PriorError::NonPositiveVariance { variance });
    }
    let limit = mean * (1.0 - mean);
    if variance >= limit {
        return Err(PriorError::VarianceTooLarge { variance, limit });
    }
    let total = limit / variance - 1.0;
    Ok(ProportionPrior { alpha: mean * total, beta: (1.0 - mean) * total })
}

/// Beta prior from an observed count of biomarker-negative patients among
/// those with known status, using the binomial variance `p(1-p)/n`.
pub fn beta_from_counts(n_negative: u64, n_known: u64) -> Result<ProportionPrior, PriorError> {
    if n_negative == 0 || n_negative >= n_known {
        return Err(PriorError::DegenerateProportion { n_negative, n_known });
    }
    let n = n_known as f64;
    let p = n_negative as f64 / n;
    beta_from_moments(p, p * (1.0 - p) / n)
}

/// Beta prior from a plausible range read as mean +/- 2 sd.
pub fn beta_from_range(low: f64, high: f64) -> Result<ProportionPrior, PriorError> {
    if !(low > 0.0 && low < high && high < 1.0) {
        return Err(PriorError::BadRange { low, high });
    }
    let mean = 0.5 * (low + high);
    let sd = 0.25 * (high - low);
    beta_from_moments(mean, sd * sd)
}
