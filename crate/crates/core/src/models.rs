//! The hierarchical normal models for pooling biomarker-positive effects.
//!
//! All four models share one structure. Each study `i` has a true
//! positive-subgroup effect `delta_pos[i] ~ N(d_pos, tau_pos^2)`. Studies
//! that carry negative-subgroup or mixed-population information also have
//! a systematic difference `beta[i] ~ N(mu_beta, tau_beta^2)`, and the
//! observed effects are
//!
//! ```text
//! Y_pos[i] ~ N(delta_pos[i],                 se_pos[i]^2)
//! Y_neg[i] ~ N(delta_pos[i] + beta[i],       se_neg[i]^2)
//! Y_mix[i] ~ N(delta_pos[i] + p[i] beta[i],  se_mix[i]^2)
//! ```
//!
//! where `p[i] ~ Beta(a_i, b_i)` is the proportion of biomarker-negative
//! patients. The model kinds differ only in which of these terms they use.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::data::{Block, BlockCounts, EffectEstimate, MetaDataset, ProportionPrior, StudyRecord};
use crate::mcmc::{
    run_sampler, summarize, ChainRng, ChainSet, McmcError, Model, ParamSpec, PosteriorSummary,
    SamplerConfig, Support,
};
use crate::priors::{HyperPriors, PriorError};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Positive-subgroup estimates only.
    M1,
    /// Positive-only studies plus studies reporting both subgroups.
    M2,
    /// As M2, plus studies reporting the negative subgroup only.
    M2Neg,
    /// Every reporting block, mixed populations interpolated through `p`.
    M3,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::M1, ModelKind::M2, ModelKind::M2Neg, ModelKind::M3];

    pub fn has_beta(self) -> bool {
        !matches!(self, ModelKind::M1)
    }

    /// The part of `dataset` this model uses.
    pub fn view(self, dataset: &MetaDataset) -> MetaDataset {
        dataset.filter_map(|s| {
            let keep = match (self, s.block()) {
                (ModelKind::M1, Block::PositiveOnly | Block::Both) => {
                    return Some(StudyRecord { negative: None, ..s.clone() })
                }
                (ModelKind::M2, b) => matches!(b, Block::PositiveOnly | Block::Both),
                (ModelKind::M2Neg, b) => b != Block::Mixed,
                (ModelKind::M3, _) => true,
                _ => false,
            };
            keep.then(|| s.clone())
        })
    }

    fn check(self, counts: BlockCounts) -> Result<(), ModelError> {
        let (ok, required) = match self {
            ModelKind::M1 => (counts.positive_only + counts.both >= 1, "at least one positive-subgroup estimate"),
            ModelKind::M2 => (counts.both >= 1, "at least one study reporting both subgroups"),
            ModelKind::M2Neg => (
                counts.both + counts.negative_only >= 1,
                "at least one study reporting a negative-subgroup estimate",
            ),
            ModelKind::M3 => (counts.mixed >= 1, "at least one mixed-population study"),
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::Incompatible { kind: self, required, counts })
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::M2Neg => "m2neg",
            ModelKind::M3 => "m3",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelKind::M1),
            "m2" => Ok(ModelKind::M2),
            "m2neg" => Ok(ModelKind::M2Neg),
            "m3" => Ok(ModelKind::M3),
            other => Err(format!("unknown model `{other}` (expected m1, m2, m2neg or m3)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model {kind} needs {required}; dataset has {counts}")]
    Incompatible { kind: ModelKind, required: &'static str, counts: BlockCounts },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error("model has no parameter `{0}`")]
    UnknownParameter(String),
    #[error("value {value} is outside the support of `{name}`")]
    OutOfSupport { name: String, value: f64 },
}

pub const D_POS: &str = "d_pos";
pub const TAU_POS: &str = "tau_pos";
pub const MU_BETA: &str = "mu_beta";
pub const TAU_BETA: &str = "tau_beta";
pub const TAU_POS_SQ: &str = "tau_pos_sq";
pub const TAU_BETA_SQ: &str = "tau_beta_sq";

#[derive(Debug, Clone, Copy)]
struct Obs {
    y: f64,
    prec: f64,
}

impl From<EffectEstimate> for Obs {
    fn from(e: EffectEstimate) -> Self {
        Obs { y: e.y, prec: e.precision() }
    }
}

impl Obs {
    fn log_density(&self, mean: f64) -> f64 {
        let r = self.y - mean;
        0.5 * self.prec.ln() - LN_SQRT_2PI - 0.5 * self.prec * r * r
    }
}

#[derive(Debug, Clone)]
struct StudyTerms {
    pos: Option<Obs>,
    neg: Option<Obs>,
    mix: Option<Obs>,
    prior: Option<ProportionPrior>,
    delta: usize,
    beta: Option<usize>,
    p: Option<usize>,
}

/// Index of every parameter in the state vector.
#[derive(Debug, Clone)]
struct Layout {
    d_pos: usize,
    tau_pos: usize,
    mu_beta: Option<usize>,
    tau_beta: Option<usize>,
}

/// A model kind bound to a dataset and hyperpriors.
///
/// The state vector is laid out as
/// `[d_pos, tau_pos, mu_beta, tau_beta, delta_pos.., beta.., p..]` with the
/// beta-related entries present only for kinds other than M1, and one `p`
/// per mixed study.
#[derive(Debug, Clone)]
pub struct BoundModel {
    kind: ModelKind,
    dataset: MetaDataset,
    hyper: HyperPriors,
    specs: Vec<ParamSpec>,
    layout: Layout,
    studies: Vec<StudyTerms>,
    fixed: Vec<Option<f64>>,
}

fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -sd.ln() - LN_SQRT_2PI - 0.5 * z * z
}

fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + normal_logpdf(x, 0.0, scale)
}

fn beta_logpdf(x: f64, prior: ProportionPrior) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    let (a, b) = (prior.alpha, prior.beta);
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

/// Density of `x ~ N(mean, sd^2)` that degenerates to a point mass when
/// `sd == 0`.
fn hierarchical_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        normal_logpdf(x, mean, sd)
    } else if sd == 0.0 && x == mean {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

fn draw_normal(rng: &mut ChainRng, precision: f64, weighted_sum: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    weighted_sum / precision + z / precision.sqrt()
}

/// Inverse-variance weighted mean.
fn fixed_effect(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (num, den) = pairs.fold((0.0, 0.0), |(n, d), (y, var)| (n + y / var, d + 1.0 / var));
    (den > 0.0).then(|| num / den)
}

impl BoundModel {
    pub fn new(kind: ModelKind, dataset: &MetaDataset, hyper: HyperPriors) -> Result<Self, ModelError> {
        hyper.validate()?;
        let view = kind.view(dataset);
        kind.check(view.block_counts())?;
        Ok(Self::build(kind, view, hyper))
    }

    /// A model with no studies, whose posterior is the prior.
    pub fn prior_only(kind: ModelKind, hyper: HyperPriors) -> Result<Self, ModelError> {
        hyper.validate()?;
        Ok(Self::build(kind, MetaDataset::default(), hyper))
    }

    fn build(kind: ModelKind, dataset: MetaDataset, hyper: HyperPriors) -> Self {
        let mut specs = vec![ParamSpec::new(D_POS, Support::Real), ParamSpec::new(TAU_POS, Support::Positive)];
        let mut layout = Layout { d_pos: 0, tau_pos: 1, mu_beta: None, tau_beta: None };
        if kind.has_beta() {
            layout.mu_beta = Some(specs.len());
            specs.push(ParamSpec::new(MU_BETA, Support::Real));
            layout.tau_beta = Some(specs.len());
            specs.push(ParamSpec::new(TAU_BETA, Support::Positive));
        }

        let mut studies: Vec<StudyTerms> = dataset
            .studies()
            .iter()
            .map(|s| StudyTerms {
                pos: s.positive.map(Obs::from),
                neg: s.negative.map(Obs::from),
                mix: s.mixed.map(Obs::from),
                prior: s.proportion_prior,
                delta: 0,
                beta: None,
                p: None,
            })
            .collect();

        for (t, s) in studies.iter_mut().zip(dataset.studies()) {
            t.delta = specs.len();
            specs.push(ParamSpec::new(format!("delta_pos[{}]", s.study_id), Support::Real));
        }
        if kind.has_beta() {
            for (t, s) in studies.iter_mut().zip(dataset.studies()) {
                if t.neg.is_some() || t.mix.is_some() {
                    t.beta = Some(specs.len());
                    specs.push(ParamSpec::new(format!("beta[{}]", s.study_id), Support::Real));
                }
            }
            for (t, s) in studies.iter_mut().zip(dataset.studies()) {
                if t.mix.is_some() {
                    t.p = Some(specs.len());
                    specs.push(ParamSpec::new(format!("p[{}]", s.study_id), Support::UnitInterval));
                }
            }
        }

        let fixed = vec![None; specs.len()];
        Self { kind, dataset, hyper, specs, layout, studies, fixed }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// The studies this model actually uses.
    pub fn dataset(&self) -> &MetaDataset {
        &self.dataset
    }

    pub fn hyperpriors(&self) -> &HyperPriors {
        &self.hyper
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Holds a parameter at `value` for the whole run. A between-study
    /// scale fixed at zero collapses the corresponding study effects onto
    /// their mean (a common-effect submodel).
    pub fn fix(mut self, name: &str, value: f64) -> Result<Self, ModelError> {
        let idx = self.index_of(name).ok_or_else(|| ModelError::UnknownParameter(name.into()))?;
        let is_scale = idx == self.layout.tau_pos || Some(idx) == self.layout.tau_beta;
        let ok = if is_scale { value.is_finite() && value >= 0.0 } else { self.specs[idx].support.contains(value) };
        if !ok {
            return Err(ModelError::OutOfSupport { name: name.into(), value });
        }
        self.fixed[idx] = Some(value);
        Ok(self)
    }

    fn tau_pos(&self, theta: &[f64]) -> f64 {
        theta[self.layout.tau_pos]
    }

    fn beta_of(&self, t: &StudyTerms, theta: &[f64]) -> f64 {
        t.beta.map_or(0.0, |b| theta[b])
    }

    fn p_of(&self, t: &StudyTerms, theta: &[f64]) -> f64 {
        t.p.map_or(0.0, |p| theta[p])
    }

    /// Observation terms only.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.studies
            .iter()
            .map(|t| self.study_log_likelihood(t, theta))
            .sum()
    }

    fn study_log_likelihood(&self, t: &StudyTerms, theta: &[f64]) -> f64 {
        let delta = theta[t.delta];
        let beta = self.beta_of(t, theta);
        let mut lp = 0.0;
        if let Some(o) = t.pos {
            lp += o.log_density(delta);
        }
        if let Some(o) = t.neg {
            lp += o.log_density(delta + beta);
        }
        if let Some(o) = t.mix {
            lp += o.log_density(delta + self.p_of(t, theta) * beta);
        }
        lp
    }

    /// Random-effects terms for `delta_pos` and `beta`.
    pub fn log_hierarchy(&self, theta: &[f64]) -> f64 {
        let d = theta[self.layout.d_pos];
        let tau = self.tau_pos(theta);
        let mut lp: f64 = self.studies.iter().map(|t| hierarchical_logpdf(theta[t.delta], d, tau)).sum();
        if let (Some(mu), Some(tb)) = (self.layout.mu_beta, self.layout.tau_beta) {
            lp += self
                .studies
                .iter()
                .filter_map(|t| t.beta)
                .map(|b| hierarchical_logpdf(theta[b], theta[mu], theta[tb]))
                .sum::<f64>();
        }
        lp
    }

    /// Priors on `d_pos`, `tau_pos`, `mu_beta`, `tau_beta` and each `p`.
    /// Parameters held fixed contribute nothing.
    pub fn log_hyperprior(&self, theta: &[f64]) -> f64 {
        let h = &self.hyper;
        let free = |i: usize| self.fixed[i].is_none();
        let mut lp = 0.0;
        let l = &self.layout;
        if free(l.d_pos) {
            lp += normal_logpdf(theta[l.d_pos], h.d_pos_mean, h.d_pos_sd);
        }
        if free(l.tau_pos) {
            lp += half_normal_logpdf(theta[l.tau_pos], h.tau_pos_scale);
        }
        if let Some(mu) = l.mu_beta.filter(|&i| free(i)) {
            lp += normal_logpdf(theta[mu], h.mu_beta_mean, h.mu_beta_sd);
        }
        if let Some(tb) = l.tau_beta.filter(|&i| free(i)) {
            lp += half_normal_logpdf(theta[tb], h.tau_beta_scale);
        }
        for t in &self.studies {
            if let (Some(p), Some(prior)) = (t.p.filter(|&i| free(i)), t.prior) {
                lp += beta_logpdf(theta[p], prior);
            }
        }
        lp
    }

    fn update_deltas(&self, theta: &mut [f64], rng: &mut ChainRng) {
        let tau = self.tau_pos(theta);
        if tau == 0.0 {
            return;
        }
        let d = theta[self.layout.d_pos];
        let prior_prec = 1.0 / (tau * tau);
        for t in &self.studies {
            if self.fixed[t.delta].is_some() {
                continue;
            }
            let (prec, sum) = self.delta_conditional(t, theta, prior_prec, prior_prec * d);
            theta[t.delta] = draw_normal(rng, prec, sum);
        }
    }

    /// Precision and precision-weighted sum of the normal conditional of
    /// `delta_pos[i]`, starting from the given prior terms.
    fn delta_conditional(&self, t: &StudyTerms, theta: &[f64], mut prec: f64, mut sum: f64) -> (f64, f64) {
        let beta = self.beta_of(t, theta);
        if let Some(o) = t.pos {
            prec += o.prec;
            sum += o.prec * o.y;
        }
        if let Some(o) = t.neg {
            prec += o.prec;
            sum += o.prec * (o.y - beta);
        }
        if let Some(o) = t.mix {
            prec += o.prec;
            sum += o.prec * (o.y - self.p_of(t, theta) * beta);
        }
        (prec, sum)
    }

    /// Same for `beta[i]`: coefficient 1 in the negative term, `p` in the
    /// mixed term.
    fn beta_conditional(&self, t: &StudyTerms, theta: &[f64], mut prec: f64, mut sum: f64) -> (f64, f64) {
        let delta = theta[t.delta];
        if let Some(o) = t.neg {
            prec += o.prec;
            sum += o.prec * (o.y - delta);
        }
        if let Some(o) = t.mix {
            let p = self.p_of(t, theta);
            prec += p * p * o.prec;
            sum += p * o.prec * (o.y - delta);
        }
        (prec, sum)
    }

    fn update_betas(&self, theta: &mut [f64], rng: &mut ChainRng) {
        let (Some(mu), Some(tb)) = (self.layout.mu_beta, self.layout.tau_beta) else { return };
        let tau_b = theta[tb];
        if tau_b == 0.0 {
            return;
        }
        let prior_prec = 1.0 / (tau_b * tau_b);
        let prior_sum = prior_prec * theta[mu];
        for t in &self.studies {
            let Some(b) = t.beta else { continue };
            if self.fixed[b].is_some() {
                continue;
            }
            let (prec, sum) = self.beta_conditional(t, theta, prior_prec, prior_sum);
            theta[b] = draw_normal(rng, prec, sum);
        }
    }

    fn update_d_pos(&self, theta: &mut [f64], rng: &mut ChainRng) {
        let idx = self.layout.d_pos;
        let h = &self.hyper;
        let prior_prec = 1.0 / (h.d_pos_sd * h.d_pos_sd);
        let prior_sum = prior_prec * h.d_pos_mean;
        let tau = self.tau_pos(theta);
        if self.fixed[idx].is_none() {
            let (prec, sum) = if tau > 0.0 {
                let w = 1.0 / (tau * tau);
                let deltas: f64 = self.studies.iter().map(|t| theta[t.delta]).sum();
                (prior_prec + w * self.studies.len() as f64, prior_sum + w * deltas)
            } else {
                // every delta_pos[i] equals d_pos
                self.studies
                    .iter()
                    .fold((prior_prec, prior_sum), |(p, s), t| self.delta_conditional(t, theta, p, s))
            };
            theta[idx] = draw_normal(rng, prec, sum);
        }
        if tau == 0.0 {
            let d = theta[idx];
            for t in &self.studies {
                theta[t.delta] = d;
            }
        }
    }

    fn update_mu_beta(&self, theta: &mut [f64], rng: &mut ChainRng) {
        let (Some(idx), Some(tb)) = (self.layout.mu_beta, self.layout.tau_beta) else { return };
        let h = &self.hyper;
        let prior_prec = 1.0 / (h.mu_beta_sd * h.mu_beta_sd);
        let prior_sum = prior_prec * h.mu_beta_mean;
        let tau_b = theta[tb];
        if self.fixed[idx].is_none() {
            let (prec, sum) = if tau_b > 0.0 {
                let w = 1.0 / (tau_b * tau_b);
                let (n, total) = self
                    .studies
                    .iter()
                    .filter_map(|t| t.beta)
                    .fold((0.0, 0.0), |(n, s), b| (n + 1.0, s + theta[b]));
                (prior_prec + w * n, prior_sum + w * total)
            } else {
                self.studies
                    .iter()
                    .filter(|t| t.beta.is_some())
                    .fold((prior_prec, prior_sum), |(p, s), t| self.beta_conditional(t, theta, p, s))
            };
            theta[idx] = draw_normal(rng, prec, sum);
        }
        if tau_b == 0.0 {
            let mu = theta[idx];
            for b in self.studies.iter().filter_map(|t| t.beta) {
                theta[b] = mu;
            }
        }
    }

    /// Normal conditional of a location parameter as (mean, sd), for tests
    /// and diagnostics. Only `delta_pos[..]`, `beta[..]`, `d_pos` and
    /// `mu_beta` have one.
    pub fn conditional_normal(&self, name: &str, theta: &[f64]) -> Option<(f64, f64)> {
        let idx = self.index_of(name)?;
        let l = &self.layout;
        let (prec, sum) = if idx == l.d_pos {
            let h = &self.hyper;
            let tau = self.tau_pos(theta);
            let pp = 1.0 / (h.d_pos_sd * h.d_pos_sd);
            let w = 1.0 / (tau * tau);
            let deltas: f64 = self.studies.iter().map(|t| theta[t.delta]).sum();
            (pp + w * self.studies.len() as f64, pp * h.d_pos_mean + w * deltas)
        } else if Some(idx) == l.mu_beta {
            let h = &self.hyper;
            let tb = theta[l.tau_beta?];
            let pp = 1.0 / (h.mu_beta_sd * h.mu_beta_sd);
            let w = 1.0 / (tb * tb);
            let betas: Vec<f64> = self.studies.iter().filter_map(|t| t.beta).map(|b| theta[b]).collect();
            (pp + w * betas.len() as f64, pp * h.mu_beta_mean + w * betas.iter().sum::<f64>())
        } else if let Some(t) = self.studies.iter().find(|t| t.delta == idx) {
            let tau = self.tau_pos(theta);
            let w = 1.0 / (tau * tau);
            self.delta_conditional(t, theta, w, w * theta[l.d_pos])
        } else if let Some(t) = self.studies.iter().find(|t| t.beta == Some(idx)) {
            let tb = theta[l.tau_beta?];
            let w = 1.0 / (tb * tb);
            self.beta_conditional(t, theta, w, w * theta[l.mu_beta?])
        } else {
            return None;
        };
        Some((sum / prec, prec.sqrt().recip()))
    }
}

impl Model for BoundModel {
    fn params(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Locations at inverse-variance fixed-effect estimates, scales at half
    /// their prior scale, proportions at their prior mean.
    fn initial_state(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.specs.len()];
        let d0 = fixed_effect(self.studies.iter().filter_map(|t| t.pos).map(|o| (o.y, 1.0 / o.prec))).unwrap_or(0.0);
        theta[self.layout.d_pos] = d0;
        theta[self.layout.tau_pos] = 0.5 * self.hyper.tau_pos_scale;
        let mu0 = fixed_effect(self.studies.iter().filter_map(|t| match (t.pos, t.neg) {
            (Some(p), Some(n)) => Some((n.y - p.y, 1.0 / p.prec + 1.0 / n.prec)),
            _ => None,
        }))
        .unwrap_or(0.0);
        if let Some(mu) = self.layout.mu_beta {
            theta[mu] = mu0;
        }
        if let Some(tb) = self.layout.tau_beta {
            theta[tb] = 0.5 * self.hyper.tau_beta_scale;
        }
        for t in &self.studies {
            theta[t.delta] = d0;
            if let Some(b) = t.beta {
                theta[b] = mu0;
            }
            if let (Some(p), Some(prior)) = (t.p, t.prior) {
                theta[p] = prior.mean();
            }
        }
        for (x, f) in theta.iter_mut().zip(&self.fixed) {
            if let Some(v) = f {
                *x = *v;
            }
        }
        let tau0 = theta[self.layout.tau_pos];
        let d = theta[self.layout.d_pos];
        for t in &self.studies {
            if tau0 == 0.0 {
                theta[t.delta] = d;
            }
        }
        if let (Some(mu), Some(tb)) = (self.layout.mu_beta, self.layout.tau_beta) {
            if theta[tb] == 0.0 {
                let m = theta[mu];
                for b in self.studies.iter().filter_map(|t| t.beta) {
                    theta[b] = m;
                }
            }
        }
        theta
    }

    fn log_joint(&self, theta: &[f64]) -> f64 {
        let lp = self.log_hyperprior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_hierarchy(theta) + self.log_likelihood(theta)
    }

    fn log_conditional(&self, theta: &[f64], index: usize) -> f64 {
        let l = &self.layout;
        if index == l.tau_pos {
            let tau = theta[index];
            let d = theta[l.d_pos];
            half_normal_logpdf(tau, self.hyper.tau_pos_scale)
                + self.studies.iter().map(|t| hierarchical_logpdf(theta[t.delta], d, tau)).sum::<f64>()
        } else if Some(index) == l.tau_beta {
            let tb = theta[index];
            let mu = theta[l.mu_beta.expect("tau_beta implies mu_beta")];
            half_normal_logpdf(tb, self.hyper.tau_beta_scale)
                + self
                    .studies
                    .iter()
                    .filter_map(|t| t.beta)
                    .map(|b| hierarchical_logpdf(theta[b], mu, tb))
                    .sum::<f64>()
        } else if let Some(t) = self.studies.iter().find(|t| t.p == Some(index)) {
            let prior = t.prior.expect("mixed study has a proportion prior");
            beta_logpdf(theta[index], prior) + self.study_log_likelihood(t, theta)
        } else {
            self.log_joint(theta)
        }
    }

    fn gibbs_sweep(&self, theta: &mut [f64], rng: &mut ChainRng) {
        self.update_deltas(theta, rng);
        self.update_betas(theta, rng);
        self.update_d_pos(theta, rng);
        self.update_mu_beta(theta, rng);
    }

    fn metropolis_params(&self) -> Vec<usize> {
        let l = &self.layout;
        std::iter::once(l.tau_pos)
            .chain(l.tau_beta)
            .chain(self.studies.iter().filter_map(|t| t.p))
            .filter(|&i| self.fixed[i].is_none())
            .collect()
    }
}

/// Draws and summary from one model fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub kind: ModelKind,
    pub chains: ChainSet,
    pub summary: PosteriorSummary,
}

impl FitResult {
    pub fn d_pos(&self) -> &crate::mcmc::ParamSummary {
        self.summary.get(D_POS).expect("every model has d_pos")
    }

    /// Largest split-R̂ among d_pos, tau_pos, mu_beta and tau_beta.
    pub fn max_hyper_rhat(&self) -> Option<(&'static str, f64)> {
        [D_POS, TAU_POS, MU_BETA, TAU_BETA]
            .into_iter()
            .filter_map(|n| Some((n, self.summary.get(n)?.rhat?)))
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
    }
}

/// Samples an already bound model and appends the squared scales.
pub fn sample_bound(model: &BoundModel, config: &SamplerConfig) -> Result<FitResult, ModelError> {
    let mut chains = run_sampler(model, config)?;
    chains.add_derived(TAU_POS_SQ, TAU_POS, |t| t * t)?;
    if model.kind.has_beta() {
        chains.add_derived(TAU_BETA_SQ, TAU_BETA, |t| t * t)?;
    }
    let summary = summarize(&chains)?;
    Ok(FitResult { kind: model.kind, chains, summary })
}

/// Binds `kind` to `dataset` and samples it, keeping the draws.
pub fn fit_full(
    kind: ModelKind,
    dataset: &MetaDataset,
    hyper: HyperPriors,
    config: &SamplerConfig,
) -> Result<FitResult, ModelError> {
    let model = BoundModel::new(kind, dataset, hyper)?;
    sample_bound(&model, config)
}

/// Posterior summary of a model fit, including `tau_pos_sq` and (for
/// models with a systematic difference) `tau_beta_sq`.
pub fn fit(
    kind: ModelKind,
    dataset: &MetaDataset,
    hyper: HyperPriors,
    config: &SamplerConfig,
) -> Result<PosteriorSummary, ModelError> {
    Ok(fit_full(kind, dataset, hyper, config)?.summary)
}
