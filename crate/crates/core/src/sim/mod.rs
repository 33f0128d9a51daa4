//! Simulation study: meta-analyses assembled from simulated trials, fitted
//! with every method, scored on bias, coverage and interval width.

mod store;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::mpsc;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{MetaDataset, ProportionPrior, StudyRecord};
use crate::mcmc::{ChainRng, SamplerConfig};
use crate::models::{fit_full, ModelError, ModelKind};
use crate::priors::HyperPriors;
use crate::survival::{generate_trial, make_study_record, GenerationParams, NegativeShare, Reporting, SurvivalError};

pub use store::{read_results, report_csv, results_csv, RESULTS_HEADER, REPORT_HEADER};

/// Maximum number of trial regenerations allowed in one replication.
pub const REGENERATION_CAP: usize = 100;
pub const RHAT_GATE: f64 = 1.05;
/// Share of non-converged replications above which a method is flagged.
pub const NONCONVERGENCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("zero truth: use absolute bias")]
    ZeroTruth,
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
    #[error("study {study}: no analysable trial after {attempts} regenerations")]
    RegenerationCap { study: usize, attempts: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("results file: {0}")]
    Io(String),
}

/// Trial-level constants shared by every study in a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConstants {
    pub n_participants: usize,
    pub p_trt: f64,
    pub baseline_rate: f64,
    pub p_neg_prior: ProportionPrior,
}

impl Default for GenerationConstants {
    fn default() -> Self {
        Self {
            n_participants: 350,
            p_trt: 0.5,
            baseline_rate: 0.15,
            p_neg_prior: ProportionPrior { alpha: 9.2, beta: 13.8 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub n_studies: usize,
    pub n_pos: usize,
    pub n_both: usize,
    pub n_mix: usize,
    pub mu_beta: f64,
    pub tau_beta_sq: f64,
    pub d_pos: f64,
    pub tau_pos_sq: f64,
    pub constants: GenerationConstants,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_pos + self.n_both + self.n_mix != self.n_studies {
            return Err(SimError::Spec(format!("{}: study blocks do not sum to n_studies", self.id)));
        }
        if self.n_pos + self.n_both == 0 {
            return Err(SimError::Spec(format!("{}: no biomarker-positive estimates", self.id)));
        }
        if !(self.tau_beta_sq >= 0.0 && self.tau_pos_sq >= 0.0) {
            return Err(SimError::Spec(format!("{}: variances must be non-negative", self.id)));
        }
        Ok(())
    }

    fn trial_params(&self, delta_pos: f64, delta_neg: f64) -> GenerationParams {
        GenerationParams {
            n_participants: self.constants.n_participants,
            p_trt: self.constants.p_trt,
            baseline_rate: self.constants.baseline_rate,
            p_neg: NegativeShare::Prior(self.constants.p_neg_prior),
            delta_pos,
            delta_neg,
            censor_time: None,
        }
    }

    /// Scenario number for sorting, e.g. 12 for `S12`.
    fn ordinal(&self) -> usize {
        self.id.trim_start_matches(['S', 's']).parse().unwrap_or(usize::MAX)
    }
}

/// The 21 scenarios S1-S21.
pub fn scenario_table() -> Vec<ScenarioSpec> {
    let row = |id: usize, blocks: (usize, usize, usize), mu_beta: f64, tau_beta_sq: f64| ScenarioSpec {
        id: format!("S{id}"),
        n_studies: blocks.0 + blocks.1 + blocks.2,
        n_pos: blocks.0,
        n_both: blocks.1,
        n_mix: blocks.2,
        mu_beta,
        tau_beta_sq,
        d_pos: -0.25,
        tau_pos_sq: 0.0056,
        constants: GenerationConstants::default(),
    };
    let mut out = vec![row(1, (5, 5, 5), 0.25, 0.01)];
    for (k, id) in (2..=5).enumerate() {
        out.push(row(id, (4 - k, 6 + k, 5), 0.25, 0.01));
    }
    for (k, id) in (6..=9).enumerate() {
        out.push(row(id, (4 - k, 5, 6 + k), 0.25, 0.01));
    }
    for (mu, id) in [0.5, 0.75, 1.0, 1.25].into_iter().zip(10..) {
        out.push(row(id, (5, 5, 5), mu, 0.01));
    }
    for (tb, id) in [0.05, 0.1, 0.2, 0.3].into_iter().zip(14..) {
        out.push(row(id, (5, 5, 5), 0.25, tb));
    }
    for (n, id) in [3, 10, 20, 30].into_iter().zip(18..) {
        out.push(row(id, (n, n, n), 0.25, 0.01));
    }
    out
}

/// Looks up `S1`..`S21` (case-insensitive).
pub fn scenario(id: &str) -> Option<ScenarioSpec> {
    scenario_table().into_iter().find(|s| s.id.eq_ignore_ascii_case(id.trim()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    M1,
    M2,
    M3Unadj,
    M3Adj,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::M1, Method::M2, Method::M3Unadj, Method::M3Adj];

    pub fn label(self) -> &'static str {
        match self {
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3Unadj => "M3-unadj",
            Method::M3Adj => "M3-adj",
        }
    }

    fn kind(self) -> ModelKind {
        match self {
            Method::M1 => ModelKind::M1,
            Method::M2 => ModelKind::M2,
            Method::M3Unadj | Method::M3Adj => ModelKind::M3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Study-level true effects of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Truths {
    pub delta_pos: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaReplication {
    /// Mixed studies report the treatment-only Cox estimate.
    pub unadjusted: MetaDataset,
    /// Mixed studies report the biomarker-adjusted Cox estimate.
    pub adjusted: MetaDataset,
    pub truths: Truths,
    /// Trials regenerated because a required Cox fit failed.
    pub regenerations: usize,
}

/// Draws study truths and simulates every trial of one meta-analysis.
/// Studies are laid out positive-only first, then both-subgroup, then mixed.
pub fn generate_meta_replication<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<MetaReplication, SimError> {
    spec.validate()?;
    let pos_dist = Normal::new(spec.d_pos, spec.tau_pos_sq.sqrt()).map_err(|e| SimError::Spec(e.to_string()))?;
    let beta_dist = Normal::new(spec.mu_beta, spec.tau_beta_sq.sqrt()).map_err(|e| SimError::Spec(e.to_string()))?;
    let mut truths = Truths { delta_pos: Vec::with_capacity(spec.n_studies), beta: Vec::with_capacity(spec.n_studies) };
    let mut unadjusted = Vec::with_capacity(spec.n_studies);
    let mut adjusted = Vec::with_capacity(spec.n_studies);
    let mut regenerations = 0;

    for i in 0..spec.n_studies {
        let delta_pos = pos_dist.sample(rng);
        let beta = beta_dist.sample(rng);
        truths.delta_pos.push(delta_pos);
        truths.beta.push(beta);
        let params = spec.trial_params(delta_pos, delta_pos + beta);
        let label = format!("study{:02}", i + 1);

        let (unadj, adj) = loop {
            let ipd = generate_trial(&params, rng);
            let attempt = || -> Result<(StudyRecord, StudyRecord), SurvivalError> {
                if i < spec.n_pos {
                    let r = make_study_record(&ipd, &label, Reporting::PositiveOnly)?;
                    Ok((r.clone(), r))
                } else if i < spec.n_pos + spec.n_both {
                    let r = make_study_record(&ipd, &label, Reporting::Both)?;
                    Ok((r.clone(), r))
                } else {
                    Ok((
                        make_study_record(&ipd, &label, Reporting::Mixed { adjusted: false })?,
                        make_study_record(&ipd, &label, Reporting::Mixed { adjusted: true })?,
                    ))
                }
            };
            match attempt() {
                Ok(pair) => break pair,
                Err(e) => {
                    regenerations += 1;
                    log::debug!("{} {label}: regenerating trial ({e})", spec.id);
                    if regenerations > REGENERATION_CAP {
                        return Err(SimError::RegenerationCap { study: i + 1, attempts: REGENERATION_CAP });
                    }
                }
            }
        };
        unadjusted.push(unadj);
        adjusted.push(adj);
    }
    let build = |v: Vec<StudyRecord>| MetaDataset::new(v).map_err(|e| SimError::Spec(e.to_string()));
    Ok(MetaReplication { unadjusted: build(unadjusted)?, adjusted: build(adjusted)?, truths, regenerations })
}

/// One method's result on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub scenario: String,
    pub replication: usize,
    pub method: Method,
    /// Posterior mean of d_pos.
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
    pub truth: f64,
}

/// Generator for replication `r`: keyed by `seed`, stream `r`.
fn replication_rng(seed: u64, replication: usize) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Generates and fits replication `replication` of `spec` with all four
/// methods. Fully determined by `(spec, replication, seed, config)`.
pub fn run_replication(
    spec: &ScenarioSpec,
    replication: usize,
    seed: u64,
    config: &SamplerConfig,
) -> Result<Vec<ReplicationResult>, SimError> {
    let mut rng = replication_rng(seed, replication);
    let fit_seeds: Vec<u64> = Method::ALL.iter().map(|_| rng.next_u64()).collect();
    let data = generate_meta_replication(spec, &mut rng)?;
    Method::ALL
        .iter()
        .zip(fit_seeds)
        .map(|(&method, fit_seed)| {
            let dataset = if method == Method::M3Adj { &data.adjusted } else { &data.unadjusted };
            let fit = fit_full(method.kind(), dataset, HyperPriors::default(), &config.with_seed(fit_seed))?;
            let d = fit.d_pos();
            let gate = fit.max_hyper_rhat().is_none_or(|(_, r)| r < RHAT_GATE);
            Ok(ReplicationResult {
                scenario: spec.id.clone(),
                replication,
                method,
                estimate: d.mean,
                lower: d.lower,
                upper: d.upper,
                converged: gate,
                truth: spec.d_pos,
            })
        })
        .collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Mean and Monte-Carlo standard error of the mean.
fn mean_and_mcse(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let mut s = CompensatedSum::default();
    let mut n = 0;
    for v in values.clone() {
        s.add(v);
        n += 1;
    }
    let mean = s.value() / n as f64;
    let mut ss = CompensatedSum::default();
    for v in values {
        ss.add((v - mean) * (v - mean));
    }
    let sd = if n > 1 { (ss.value() / (n as f64 - 1.0)).sqrt() } else { 0.0 };
    (mean, sd / (n as f64).sqrt(), n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodPerformance {
    pub method: Method,
    /// Mean of 100 (estimate - truth) / truth.
    pub pct_bias: f64,
    pub mcse_bias: f64,
    pub coverage: f64,
    pub mcse_coverage: f64,
    pub mean_width: f64,
    pub mcse_width: f64,
    pub n_reps: usize,
    pub n_converged: usize,
    /// More than 5% of replications failed the R-hat gate.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub scenario: String,
    pub rows: Vec<MethodPerformance>,
}

impl PerformanceReport {
    pub fn get(&self, method: Method) -> Option<&MethodPerformance> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }
}

/// Performance of each method over all replications in `results`
/// belonging to `scenario`. Every replication counts, converged or not.
pub fn aggregate(scenario: &str, results: &[ReplicationResult]) -> Result<PerformanceReport, SimError> {
    let mut rows = Vec::new();
    for method in Method::ALL {
        let mut rs: Vec<&ReplicationResult> =
            results.iter().filter(|r| r.method == method && r.scenario == scenario).collect();
        if rs.is_empty() {
            continue;
        }
        if rs.iter().any(|r| r.truth == 0.0) {
            return Err(SimError::ZeroTruth);
        }
        rs.sort_by_key(|r| r.replication);
        let bias = rs.iter().map(|r| 100.0 * (r.estimate - r.truth) / r.truth);
        let cover = rs.iter().map(|r| if r.lower <= r.truth && r.truth <= r.upper { 1.0 } else { 0.0 });
        let width = rs.iter().map(|r| r.upper - r.lower);
        let (pct_bias, mcse_bias, n) = mean_and_mcse(bias);
        let (coverage, _, _) = mean_and_mcse(cover);
        let (mean_width, mcse_width, _) = mean_and_mcse(width);
        let n_converged = rs.iter().filter(|r| r.converged).count();
        rows.push(MethodPerformance {
            method,
            pct_bias,
            mcse_bias,
            coverage,
            mcse_coverage: (coverage * (1.0 - coverage) / n as f64).sqrt(),
            mean_width,
            mcse_width,
            n_reps: n,
            n_converged,
            flagged: (n - n_converged) as f64 > NONCONVERGENCE_TOLERANCE * n as f64,
        });
    }
    Ok(PerformanceReport { scenario: scenario.to_string(), rows })
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub results: Vec<ReplicationResult>,
    pub report: PerformanceReport,
}

fn check_run(spec: &ScenarioSpec, n_replications: usize) -> Result<(), SimError> {
    spec.validate()?;
    if n_replications < 2 {
        return Err(SimError::TooFewReplications(n_replications));
    }
    if spec.d_pos == 0.0 {
        return Err(SimError::ZeroTruth);
    }
    Ok(())
}

/// Runs replications `0..n_replications` in parallel and scores them.
pub fn run_scenario(
    spec: &ScenarioSpec,
    n_replications: usize,
    seed: u64,
    config: &SamplerConfig,
) -> Result<ScenarioRun, SimError> {
    check_run(spec, n_replications)?;
    let per_rep: Vec<Vec<ReplicationResult>> = (0..n_replications)
        .into_par_iter()
        .map(|r| run_replication(spec, r, seed, config))
        .collect::<Result<_, _>>()?;
    let results: Vec<ReplicationResult> = per_rep.into_iter().flatten().collect();
    let report = aggregate(&spec.id, &results)?;
    Ok(ScenarioRun { results, report })
}

/// Like [`run_scenario`], checkpointing every finished replication to the
/// results CSV at `path`. With `resume`, replications already complete in
/// the file are kept and not recomputed. The file is rewritten in
/// canonical order at the end.
pub fn run_scenario_persistent(
    spec: &ScenarioSpec,
    n_replications: usize,
    seed: u64,
    config: &SamplerConfig,
    path: &Path,
    resume: bool,
) -> Result<ScenarioRun, SimError> {
    check_run(spec, n_replications)?;
    let mut all = if resume && path.exists() { store::dedup(read_results(path)?) } else { Vec::new() };
    let done = store::complete_replications(&all, &spec.id);
    all.retain(|r| r.scenario != spec.id || (done.contains(&r.replication) && r.replication < n_replications));
    store::write_all(path, &all)?;
    let todo: Vec<usize> = (0..n_replications).filter(|r| !done.contains(r)).collect();
    log::info!("{}: {} of {} replications to run", spec.id, todo.len(), n_replications);

    let (tx, rx) = mpsc::channel::<Vec<ReplicationResult>>();
    let outcome = std::thread::scope(|s| {
        let worker = s.spawn(move || {
            todo.par_iter().try_for_each_with(tx, |tx, &r| {
                let res = run_replication(spec, r, seed, config)?;
                let _ = tx.send(res);
                Ok::<_, SimError>(())
            })
        });
        let mut appender = store::Appender::open(path)?;
        for batch in rx {
            appender.append(&batch)?;
            all.extend(batch);
        }
        worker.join().expect("replication worker panicked")
    });
    outcome?;

    store::write_all(path, &sorted(all.clone()))?;
    let results: Vec<ReplicationResult> = sorted(all.into_iter().filter(|r| r.scenario == spec.id).collect());
    let report = aggregate(&spec.id, &results)?;
    Ok(ScenarioRun { results, report })
}

fn sorted(mut v: Vec<ReplicationResult>) -> Vec<ReplicationResult> {
    v.sort_by(|a, b| {
        let key = |r: &ReplicationResult| {
            (r.scenario.trim_start_matches(['S', 's']).parse::<usize>().unwrap_or(usize::MAX), r.replication, r.method)
        };
        key(a).cmp(&key(b)).then_with(|| a.scenario.cmp(&b.scenario))
    });
    v
}

/// Sorted by scenario number, for reports covering several scenarios.
pub fn sort_specs(specs: &mut [ScenarioSpec]) {
    specs.sort_by_key(ScenarioSpec::ordinal);
}
