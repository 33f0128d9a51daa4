//! Simulated two-arm survival trials with a binary biomarker, and the
//! study-level effect estimates a trial would report.

mod cox;

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp};
use thiserror::Error;

use crate::data::{DataError, EffectEstimate, ProportionPrior, StudyRecord};
use crate::priors::{beta_from_counts, PriorError};

pub use cox::{fit_cox, CoxError, CoxFit};

pub const IPD_HEADER: &str = "id,time,event,trt,biomarker_negative";

/// Share of biomarker-negative participants in a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NegativeShare {
    /// Drawn once per trial from a beta distribution.
    Prior(ProportionPrior),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub n_participants: usize,
    pub p_trt: f64,
    /// Control-arm hazard.
    pub baseline_rate: f64,
    pub p_neg: NegativeShare,
    /// True log hazard ratio in the biomarker-positive stratum.
    pub delta_pos: f64,
    /// True log hazard ratio in the biomarker-negative stratum.
    pub delta_neg: f64,
    /// Administrative censoring time; `None` follows everyone to failure.
    pub censor_time: Option<f64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            n_participants: 350,
            p_trt: 0.5,
            baseline_rate: 0.15,
            p_neg: NegativeShare::Prior(ProportionPrior { alpha: 9.2, beta: 13.8 }),
            delta_pos: 0.0,
            delta_neg: 0.0,
            censor_time: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), SurvivalError> {
        let bad = |m: &str| Err(SurvivalError::Params(m.to_string()));
        if self.n_participants < 4 {
            return bad("n_participants must be at least 4");
        }
        if !(self.p_trt > 0.0 && self.p_trt < 1.0) {
            return bad("p_trt must lie in (0, 1)");
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate.is_finite()) {
            return bad("baseline rate must be positive");
        }
        if let NegativeShare::Fixed(p) = self.p_neg {
            if !(0.0..=1.0).contains(&p) {
                return bad("negative share must lie in [0, 1]");
            }
        }
        if !(self.delta_pos.is_finite() && self.delta_neg.is_finite()) {
            return bad("effects must be finite");
        }
        if let Some(c) = self.censor_time {
            if !(c > 0.0) {
                return bad("censoring time must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("invalid generation parameters: {0}")]
    Params(String),
    #[error("{population} fit: {source}")]
    Cox { population: &'static str, source: CoxError },
    #[error("{population} fit did not converge")]
    NotConverged { population: &'static str },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subject {
    pub time: f64,
    pub event: bool,
    pub trt: bool,
    pub biomarker_negative: bool,
}

/// Individual participant data for one trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialIpd {
    pub subjects: Vec<Subject>,
}

impl TrialIpd {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_negative(&self) -> usize {
        self.subjects.iter().filter(|s| s.biomarker_negative).count()
    }

    /// Subjects in one biomarker stratum.
    pub fn stratum(&self, negative: bool) -> TrialIpd {
        TrialIpd { subjects: self.subjects.iter().filter(|s| s.biomarker_negative == negative).copied().collect() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(IPD_HEADER);
        out.push('\n');
        for (i, s) in self.subjects.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                s.time,
                s.event as u8,
                s.trt as u8,
                s.biomarker_negative as u8
            );
        }
        out
    }

    pub fn fit(&self, covariates: Covariates) -> Result<CoxFit, CoxError> {
        let times: Vec<f64> = self.subjects.iter().map(|s| s.time).collect();
        let events: Vec<bool> = self.subjects.iter().map(|s| s.event).collect();
        let mut x = vec![self.subjects.iter().map(|s| s.trt as u8 as f64).collect()];
        if covariates == Covariates::TrtBiomarker {
            x.push(self.subjects.iter().map(|s| s.biomarker_negative as u8 as f64).collect());
        }
        fit_cox(&times, &events, &x)
    }
}

/// Simulates one trial. Biomarker status and arm are independent
/// Bernoulli draws; survival is exponential with hazard
/// `baseline_rate * exp(delta * trt)`, `delta` taken from the subject's
/// stratum.
pub fn generate_trial<R: Rng + ?Sized>(params: &GenerationParams, rng: &mut R) -> TrialIpd {
    let p_neg = match params.p_neg {
        NegativeShare::Prior(prior) => Beta::new(prior.alpha, prior.beta).expect("valid beta prior").sample(rng),
        NegativeShare::Fixed(p) => p,
    };
    let subjects = (0..params.n_participants)
        .map(|_| {
            let biomarker_negative = rng.random_bool(p_neg);
            let trt = rng.random_bool(params.p_trt);
            let delta = if biomarker_negative { params.delta_neg } else { params.delta_pos };
            let rate = params.baseline_rate * if trt { delta.exp() } else { 1.0 };
            let t: f64 = Exp::new(rate).expect("positive rate").sample(rng);
            match params.censor_time {
                Some(c) if t > c => Subject { time: c, event: false, trt, biomarker_negative },
                _ => Subject { time: t, event: true, trt, biomarker_negative },
            }
        })
        .collect();
    TrialIpd { subjects }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariates {
    Trt,
    TrtBiomarker,
}

/// Which populations a simulated trial reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reporting {
    PositiveOnly,
    Both,
    /// Whole-trial estimate only; `adjusted` adds biomarker status to the
    /// Cox model.
    Mixed { adjusted: bool },
}

fn treatment_effect(ipd: &TrialIpd, covariates: Covariates, population: &'static str) -> Result<EffectEstimate, SurvivalError> {
    let fit = ipd.fit(covariates).map_err(|source| SurvivalError::Cox { population, source })?;
    if !fit.converged {
        return Err(SurvivalError::NotConverged { population });
    }
    Ok(EffectEstimate { y: fit.coefficients[0], se: fit.standard_errors[0] })
}

/// Reduces a trial to the estimates it reports. Mixed reports carry a
/// proportion prior built from the realised stratum counts.
pub fn make_study_record(ipd: &TrialIpd, study_id: &str, reporting: Reporting) -> Result<StudyRecord, SurvivalError> {
    let record = match reporting {
        Reporting::PositiveOnly => {
            let pos = treatment_effect(&ipd.stratum(false), Covariates::Trt, "positive")?;
            StudyRecord::new(study_id, Some(pos), None, None, None)?
        }
        Reporting::Both => {
            let pos = treatment_effect(&ipd.stratum(false), Covariates::Trt, "positive")?;
            let neg = treatment_effect(&ipd.stratum(true), Covariates::Trt, "negative")?;
            StudyRecord::new(study_id, Some(pos), Some(neg), None, None)?
        }
        Reporting::Mixed { adjusted } => {
            let prior = beta_from_counts(ipd.n_negative() as u64, ipd.len() as u64)?;
            let (cov, label) = if adjusted { (Covariates::TrtBiomarker, "adjusted mixed") } else { (Covariates::Trt, "mixed") };
            let mix = treatment_effect(ipd, cov, label)?;
            StudyRecord::new(study_id, None, None, Some(mix), Some(prior))?
        }
    };
    Ok(record)
}

#[cfg(test)]
mod tests;
