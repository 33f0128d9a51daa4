use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;

use submeta::data::parse_dataset;
use submeta::datasets::{bundled, Outcome, Variant};
use submeta::mcmc::ChainRng;
use submeta::models::{fit_full, FitResult, ModelKind};
use submeta::priors::{beta_from_counts, beta_from_moments, beta_from_range, HyperPriors};
use submeta::report::{
    example_forest_rows, forest_csv, parse_forest_csv, precision_gain, render_forest as render_svg, results_table,
    summary_on_scale, summary_rows, SUMMARY_HEADER,
};
use submeta::sim::{
    report_csv, run_scenario_persistent, scenario, scenario_table, sort_specs, GenerationConstants, ScenarioSpec,
    RHAT_GATE,
};
use submeta::survival::{generate_trial, Covariates, GenerationParams, NegativeShare};

use super::{CliError, Config, FitArgs, HyperArgs, MomentsArgs, Preset, RenderArgs, ReproduceArgs, StudyArgs, TrialArgs};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

impl HyperArgs {
    fn resolve(&self, cfg: &Config) -> Result<HyperPriors, CliError> {
        let mut h = HyperPriors::default();
        if let Some(v) = cfg.pick(self.tau_pos_scale, "tau-pos-scale")? {
            h.tau_pos_scale = v;
        }
        if let Some(v) = cfg.pick(self.tau_beta_scale, "tau-beta-scale")? {
            h.tau_beta_scale = v;
        }
        h.validate()?;
        Ok(h)
    }
}

/// Diagnostic for a fit whose hyperparameters fail the R-hat gate.
fn convergence_problem(fit: &FitResult) -> Option<String> {
    let (name, rhat) = fit.max_hyper_rhat()?;
    (rhat >= RHAT_GATE).then(|| format!("{}: R-hat of {name} is {rhat:.3} (limit {RHAT_GATE})", fit.kind))
}

pub fn fit(a: FitArgs, cfg: &Config) -> Result<(), CliError> {
    let kind: ModelKind = cfg.require(a.model, "model")?;
    let data_path: PathBuf = cfg.require(a.data, "data")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let label: String = cfg.pick(a.outcome_label, "outcome-label")?.unwrap_or_else(|| "outcome".into());
    let dump: Option<PathBuf> = cfg.pick(a.dump_chains, "dump-chains")?;
    let hr_scale = cfg.switch(a.hr_scale, "hr-scale")?;
    let (_, sampler) = a.sampler.resolve(cfg, Preset::Paper)?;
    let hyper = a.hyper.resolve(cfg)?;

    let dataset = parse_dataset(&read_text(&data_path)?)?;
    let result = fit_full(kind, &dataset, hyper, &sampler)?;
    let summary = summary_on_scale(&result.chains, hr_scale)?;
    write_text(&out, &format!("{SUMMARY_HEADER}\n{}", summary_rows(&label, kind, &summary)))?;
    if let Some(dir) = dump {
        result.chains.dump(&dir)?;
    }
    let d = result.d_pos();
    println!("{label} {kind}: d_pos mean {:.4} median {:.4} 95% CrI ({:.4}, {:.4})", d.mean, d.median, d.lower, d.upper);
    match convergence_problem(&result) {
        Some(msg) => Err(CliError::Convergence(msg)),
        None => Ok(()),
    }
}

pub fn priors_moments(a: MomentsArgs) -> Result<(), CliError> {
    let prior = match (a.mean, a.var, a.counts, a.range) {
        (Some(m), Some(v), _, _) => beta_from_moments(m, v)?,
        (_, _, Some(c), _) => beta_from_counts(c[0], c[1])?,
        (_, _, _, Some(r)) => beta_from_range(r[0], r[1])?,
        _ => return Err(CliError::Validation("give --mean and --var, --counts K N or --range LO HI".into())),
    };
    println!("alpha,beta\n{},{}", prior.alpha, prior.beta);
    Ok(())
}

pub fn simulate_trial(a: TrialArgs, cfg: &Config) -> Result<(), CliError> {
    let defaults = GenerationParams::default();
    let params = GenerationParams {
        n_participants: cfg.pick(a.n, "n")?.unwrap_or(defaults.n_participants),
        p_trt: cfg.pick(a.p_trt, "p-trt")?.unwrap_or(defaults.p_trt),
        baseline_rate: cfg.pick(a.lambda, "lambda")?.unwrap_or(defaults.baseline_rate),
        p_neg: cfg.pick(a.p_neg, "p-neg")?.map_or(defaults.p_neg, NegativeShare::Fixed),
        delta_pos: cfg.require(a.delta_pos, "delta-pos")?,
        delta_neg: cfg.require(a.delta_neg, "delta-neg")?,
        censor_time: cfg.pick(a.censor_time, "censor-time")?,
    };
    params.validate()?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let seed = super::resolve_seed(a.seed, cfg)?;

    let ipd = generate_trial(&params, &mut ChainRng::seed_from_u64(seed));
    write_text(&out, &ipd.to_csv())?;

    println!("population,n,log_hr,se");
    for (name, part) in [("positive", ipd.stratum(false)), ("negative", ipd.stratum(true)), ("all", ipd.clone())] {
        match part.fit(Covariates::Trt) {
            Ok(f) if f.converged => println!("{name},{},{},{}", part.len(), f.coefficients[0], f.standard_errors[0]),
            Ok(_) => println!("{name},{},NA,NA", part.len()),
            Err(e) => {
                log::warn!("{name}: {e}");
                println!("{name},{},NA,NA", part.len());
            }
        }
    }
    Ok(())
}

fn custom_scenario(a: &StudyArgs, cfg: &Config) -> Result<ScenarioSpec, CliError> {
    let c = &a.custom;
    Ok(ScenarioSpec {
        id: "custom".into(),
        n_studies: cfg.require(c.n_studies, "n-studies")?,
        n_pos: cfg.require(c.n_pos, "n-pos")?,
        n_both: cfg.require(c.n_both, "n-both")?,
        n_mix: cfg.require(c.n_mix, "n-mix")?,
        mu_beta: cfg.require(c.mu_beta, "mu-beta")?,
        tau_beta_sq: cfg.require(c.tau_beta_sq, "tau-beta-sq")?,
        d_pos: cfg.pick(c.d_pos, "d-pos")?.unwrap_or(-0.25),
        tau_pos_sq: cfg.pick(c.tau_pos_sq, "tau-pos-sq")?.unwrap_or(0.0056),
        constants: GenerationConstants::default(),
    })
}

fn default_report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}_report.csv"))
}

pub fn simulate_study(a: StudyArgs, cfg: &Config) -> Result<(), CliError> {
    let which: String = cfg.require(a.scenario.clone(), "scenario")?;
    let mut specs = match which.to_ascii_lowercase().as_str() {
        "all" => scenario_table(),
        "custom" => vec![custom_scenario(&a, cfg)?],
        id => vec![scenario(id).ok_or_else(|| CliError::Validation(format!("unknown scenario `{which}`")))?],
    };
    sort_specs(&mut specs);
    let (preset, sampler) = a.sampler.resolve(cfg, Preset::Desk)?;
    let reps = cfg.pick(a.reps, "reps")?.unwrap_or(match preset {
        Preset::Desk => 100,
        Preset::Paper => 1000,
    });
    let out: PathBuf = cfg.require(a.out.clone(), "out")?;
    let report_path = cfg.pick(a.report.clone(), "report")?.unwrap_or_else(|| default_report_path(&out));
    let mut resume = cfg.switch(a.resume, "resume")?;
    let seed = sampler.seed;

    let mut reports = Vec::new();
    for spec in &specs {
        log::info!("scenario {} ({} replications)", spec.id, reps);
        let run = run_scenario_persistent(spec, reps, seed, &sampler, &out, resume)?;
        // later scenarios share the file with the ones already written
        resume = true;
        reports.push(run.report);
    }
    let text = report_csv(&reports);
    write_text(&report_path, &text)?;
    print!("{text}");

    let flagged: Vec<String> = reports
        .iter()
        .flat_map(|r| r.rows.iter().filter(|m| m.flagged).map(move |m| format!("{} {}", r.scenario, m.method)))
        .collect();
    if flagged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Convergence(format!(
            "more than 5% of replications failed the R-hat gate for: {}",
            flagged.join(", ")
        )))
    }
}

pub fn reproduce_example(a: ReproduceArgs, cfg: &Config) -> Result<(), CliError> {
    let outcome: Outcome = cfg
        .require(a.outcome, "outcome")?
        .parse::<Outcome>()
        .map_err(CliError::Validation)?;
    let variant: Variant = cfg
        .pick(a.variant, "variant")?
        .unwrap_or_else(|| "main".into())
        .parse::<Variant>()
        .map_err(CliError::Validation)?;
    let out_dir: PathBuf = cfg.pick(a.out_dir, "out-dir")?.unwrap_or_else(|| PathBuf::from("."));
    let dump: Option<PathBuf> = cfg.pick(a.dump_chains, "dump-chains")?;
    let hr_scale = cfg.switch(a.hr_scale, "hr-scale")?;
    let (_, sampler) = a.sampler.resolve(cfg, Preset::Paper)?;
    let hyper = a.hyper.resolve(cfg)?;

    let dataset = bundled(outcome, variant);
    let label = outcome.to_string();
    let mut fits = Vec::new();
    for kind in [ModelKind::M1, ModelKind::M2, ModelKind::M3] {
        log::info!("fitting {kind}");
        let fit = fit_full(kind, &dataset, hyper, &sampler)?;
        if let Some(dir) = &dump {
            fit.chains.dump(&dir.join(kind.to_string()))?;
        }
        fits.push(fit);
    }

    let stem = format!("{}_{variant}", label.to_ascii_lowercase());
    let log_scale: Vec<_> = fits.iter().map(|f| (f.kind, &f.summary)).collect();
    let table = results_table(&log_scale, hr_scale);
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for f in &fits {
        summary.push_str(&summary_rows(&label, f.kind, &summary_on_scale(&f.chains, hr_scale)?));
    }
    let rows = example_forest_rows(&dataset, &log_scale);
    write_text(&out_dir.join(format!("{stem}_table.csv")), &table)?;
    write_text(&out_dir.join(format!("{stem}_summary.csv")), &summary)?;
    write_text(&out_dir.join(format!("{stem}_forest.csv")), &forest_csv(&rows))?;
    write_text(&out_dir.join(format!("{stem}_forest.svg")), &render_svg(&rows)?)?;

    let mut report = table;
    if let Some(g) = precision_gain(&fits[0].summary, &fits[2].summary) {
        let _ = writeln!(report, "M3 vs M1 d_pos CrI width reduction: {:.1}%", 100.0 * g);
    }
    print!("{report}");

    let problems: Vec<String> = fits.iter().filter_map(convergence_problem).collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Convergence(problems.join("; ")))
    }
}

pub fn render_forest(a: RenderArgs, cfg: &Config) -> Result<(), CliError> {
    let input: PathBuf = cfg.require(a.input, "input")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let rows = parse_forest_csv(&read_text(&input)?)?;
    write_text(&out, &render_svg(&rows)?)
}
