//! Command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input, 3 sampler or simulation
//! convergence failure, 4 I/O failure.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand};

use submeta::data::DataError;
use submeta::mcmc::{McmcError, SamplerConfig};
use submeta::models::{ModelError, ModelKind};
use submeta::priors::PriorError;
use submeta::report::ReportError;
use submeta::sim::SimError;
use submeta::survival::SurvivalError;

mod commands;
mod config;

pub use config::Config;

pub const SEED_ENV: &str = "SUBMETA_SEED";
pub const WORKERS_ENV: &str = "SUBMETA_WORKERS";
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Convergence(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<McmcError> for CliError {
    fn from(e: McmcError) -> Self {
        match e {
            McmcError::AdaptationFailure { .. } => CliError::Convergence(e.to_string()),
            McmcError::Io(m) => CliError::Io(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Mcmc(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(m) => m.into(),
            SimError::Io(m) => CliError::Io(m),
            SimError::RegenerationCap { .. } => CliError::Convergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}
validation_from!(DataError, PriorError, ReportError, SurvivalError);

#[derive(Debug, Parser)]
#[command(name = "submeta", version, about = "Biomarker-subgroup meta-analysis and simulation")]
pub struct Cli {
    /// File of `key = value` lines giving defaults for any long option.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads [env: SUBMETA_WORKERS].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model to a dataset CSV and write its posterior summary.
    Fit(FitArgs),
    /// Proportion-prior construction.
    #[command(subcommand)]
    Priors(PriorsCommand),
    /// Simulated survival trials and simulation studies.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Fit M1, M2 and M3 to a bundled example dataset.
    ReproduceExample(ReproduceArgs),
    /// Draw a forest plot from a rows CSV.
    RenderForest(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected desk or paper)")),
        }
    }
}

impl Preset {
    fn sampler(self, seed: u64) -> SamplerConfig {
        match self {
            Preset::Desk => SamplerConfig::desk(seed),
            Preset::Paper => SamplerConfig::paper(seed),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Run-length preset: desk or paper.
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Post-burn-in iterations per chain.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Random seed [env: SUBMETA_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    /// Half-normal scale of the prior on tau_pos.
    #[arg(long)]
    pub tau_pos_scale: Option<f64>,
    /// Half-normal scale of the prior on tau_beta.
    #[arg(long)]
    pub tau_beta_scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// m1, m2, m2neg or m3.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcome_label: Option<String>,
    /// Summary CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-chain draw CSVs.
    #[arg(long)]
    pub dump_chains: Option<PathBuf>,
    /// Report effect parameters as hazard ratios.
    #[arg(long)]
    pub hr_scale: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Subcommand)]
pub enum PriorsCommand {
    /// Beta shapes from a mean and variance, event counts, or a plausible range.
    Moments(MomentsArgs),
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["mean", "counts", "range"])))]
pub struct MomentsArgs {
    #[arg(long, requires = "var")]
    pub mean: Option<f64>,
    #[arg(long, requires = "mean")]
    pub var: Option<f64>,
    /// Number biomarker-negative and number with known status.
    #[arg(long, num_args = 2, value_names = ["K", "N"])]
    pub counts: Option<Vec<u64>>,
    /// Range read as mean +/- 2 sd.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub range: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// One two-arm trial with exponential survival; writes individual data.
    Trial(TrialArgs),
    /// Replicated meta-analyses under the scenario grid.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrialArgs {
    /// True log hazard ratio among biomarker-positive participants.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_pos: Option<f64>,
    /// True log hazard ratio among biomarker-negative participants.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_neg: Option<f64>,
    /// Participants.
    #[arg(long)]
    pub n: Option<usize>,
    /// Control-arm hazard.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub p_trt: Option<f64>,
    /// Fixed biomarker-negative share; drawn from Beta(9.2, 13.8) if absent.
    #[arg(long)]
    pub p_neg: Option<f64>,
    /// Administrative censoring time.
    #[arg(long)]
    pub censor_time: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    /// S1..S21, `all`, or `custom` (block sizes and truths from options).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Replications per scenario [default: 100 desk, 1000 paper].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Results CSV, appended as replications finish.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Performance report CSV [default: <out>_report.csv].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Keep replications already complete in the results file.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub custom: CustomScenarioArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CustomScenarioArgs {
    #[arg(long)]
    pub n_studies: Option<usize>,
    #[arg(long)]
    pub n_pos: Option<usize>,
    #[arg(long)]
    pub n_both: Option<usize>,
    #[arg(long)]
    pub n_mix: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_beta: Option<f64>,
    #[arg(long)]
    pub tau_beta_sq: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub d_pos: Option<f64>,
    #[arg(long)]
    pub tau_pos_sq: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    /// pfs or os.
    #[arg(long)]
    pub outcome: Option<String>,
    /// main or sensitivity.
    #[arg(long)]
    pub variant: Option<String>,
    /// Directory for the table, summary and forest-plot files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub dump_chains: Option<PathBuf>,
    #[arg(long)]
    pub hr_scale: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Forest rows CSV (label,estimate,lower,upper,population,model).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// SVG to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seed from the command line, the config file or the environment.
fn resolve_seed(cli: Option<u64>, cfg: &Config) -> Result<u64, CliError> {
    match cfg.pick(cli, "seed")? {
        Some(s) => Ok(s),
        None => Ok(config::env_value(SEED_ENV)?.unwrap_or(DEFAULT_SEED)),
    }
}

impl SamplerArgs {
    fn resolve(&self, cfg: &Config, default: Preset) -> Result<(Preset, SamplerConfig), CliError> {
        let preset = cfg.pick(self.preset, "preset")?.unwrap_or(default);
        let mut sc = preset.sampler(resolve_seed(self.seed, cfg)?);
        if let Some(v) = cfg.pick(self.chains, "chains")? {
            sc.n_chains = v;
        }
        if let Some(v) = cfg.pick(self.burn_in, "burn-in")? {
            sc.burn_in = v;
        }
        if let Some(v) = cfg.pick(self.samples, "samples")? {
            sc.samples = v;
        }
        if let Some(v) = cfg.pick(self.thin, "thin")? {
            sc.thin = v;
        }
        sc.validate()?;
        Ok((preset, sc))
    }
}

fn setup_workers(cli: Option<usize>, cfg: &Config) -> Result<(), CliError> {
    let n = match cfg.pick(cli, "workers")? {
        Some(n) => Some(n),
        None => config::env_value::<usize>(WORKERS_ENV)?,
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Validation("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    setup_workers(cli.workers, &cfg)?;
    match cli.command {
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Priors(PriorsCommand::Moments(a)) => commands::priors_moments(a),
        Command::Simulate(SimulateCommand::Trial(a)) => commands::simulate_trial(a, &cfg),
        Command::Simulate(SimulateCommand::Study(a)) => commands::simulate_study(a, &cfg),
        Command::ReproduceExample(a) => commands::reproduce_example(a, &cfg),
        Command::RenderForest(a) => commands::render_forest(a, &cfg),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
