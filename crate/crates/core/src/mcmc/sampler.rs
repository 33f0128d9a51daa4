use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{ChainRng, ChainSet, McmcError, Model, SamplerConfig};

const TARGET_ACCEPTANCE: f64 = 0.44;

/// Independent stream for one chain: the seed picks the key, the chain
/// index picks the ChaCha stream.
pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Robbins-Monro gain for the log step size at burn-in iteration `t`.
fn adaptation_gain(t: usize) -> f64 {
    (10.0 * ((t + 1) as f64).powf(-0.6)).min(1.0)
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    acceptance: Vec<(String, f64)>,
}

fn run_chain<M: Model>(model: &M, config: &SamplerConfig, chain: usize) -> Result<ChainOutput, McmcError> {
    let specs = model.params();
    let mut rng = chain_rng(config.seed, chain);
    let mut theta = model.initial_state();
    let lp0 = model.log_joint(&theta);
    if !lp0.is_finite() {
        return Err(McmcError::Initialization(lp0));
    }

    let mh = model.metropolis_params();
    let mut log_step: Vec<f64> = mh.iter().map(|&i| model.initial_step(i).ln()).collect();
    let mut window_accepts = vec![0usize; mh.len()];
    let mut kept_accepts = vec![0usize; mh.len()];

    let retained = config.retained();
    let mut draws = vec![Vec::with_capacity(retained); specs.len()];
    let total = config.burn_in + config.samples;

    for it in 0..total {
        model.gibbs_sweep(&mut theta, &mut rng);

        for (k, &idx) in mh.iter().enumerate() {
            let support = specs[idx].support;
            let current = theta[idx];
            let lp_cur = model.log_conditional(&theta, idx) + support.log_jacobian(current);
            let z: f64 = rng.sample(StandardNormal);
            let proposed = support.from_unconstrained(support.to_unconstrained(current) + log_step[k].exp() * z);
            let log_u: f64 = rng.random::<f64>().ln();
            let accepted = if support.contains(proposed) {
                theta[idx] = proposed;
                let lp_prop = model.log_conditional(&theta, idx) + support.log_jacobian(proposed);
                if lp_prop.is_finite() && log_u < lp_prop - lp_cur {
                    true
                } else {
                    theta[idx] = current;
                    false
                }
            } else {
                false
            };

            if it < config.burn_in {
                let a = if accepted { 1.0 } else { 0.0 };
                log_step[k] += adaptation_gain(it) * (a - TARGET_ACCEPTANCE);
                window_accepts[k] += accepted as usize;
            } else {
                kept_accepts[k] += accepted as usize;
            }
        }

        if it < config.burn_in && (it + 1) % config.adapt_window == 0 {
            for (k, &idx) in mh.iter().enumerate() {
                if window_accepts[k] == 0 {
                    return Err(McmcError::AdaptationFailure {
                        param: specs[idx].name.clone(),
                        iteration: it + 1,
                    });
                }
            }
            window_accepts.iter_mut().for_each(|a| *a = 0);
        }

        if it >= config.burn_in && (it + 1 - config.burn_in).is_multiple_of(config.thin) {
            for (col, &x) in draws.iter_mut().zip(theta.iter()) {
                col.push(x);
            }
        }
    }

    let acceptance = mh
        .iter()
        .zip(&kept_accepts)
        .map(|(&idx, &n)| (specs[idx].name.clone(), n as f64 / config.samples as f64))
        .collect();
    Ok(ChainOutput { draws, acceptance })
}

/// Runs `config.n_chains` independent chains in parallel.
///
/// Chain `k` uses stream `k` of the generator keyed by `config.seed`, so a
/// given (model, config) pair always yields the same draws.
pub fn run_sampler<M: Model>(model: &M, config: &SamplerConfig) -> Result<ChainSet, McmcError> {
    config.validate()?;
    let outputs: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|k| run_chain(model, config, k))
        .collect::<Result<_, _>>()?;
    let names = model.params().iter().map(|p| p.name.clone()).collect();
    let (draws, acceptance) = outputs.into_iter().map(|o| (o.draws, o.acceptance)).unzip();
    Ok(ChainSet::new(names, draws, acceptance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{summarize, ParamSpec, Support};

    /// Independent N(0, 1) and Beta(2, 5) and half-normal(1) parameters,
    /// all updated by Metropolis.
    struct PriorOnly {
        specs: Vec<ParamSpec>,
    }

    impl PriorOnly {
        fn new() -> Self {
            Self {
                specs: vec![
                    ParamSpec::new("theta", Support::Real),
                    ParamSpec::new("p", Support::UnitInterval),
                    ParamSpec::new("tau", Support::Positive),
                ],
            }
        }
    }

    impl Model for PriorOnly {
        fn params(&self) -> &[ParamSpec] {
            &self.specs
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![0.0, 0.5, 1.0]
        }
        fn log_joint(&self, t: &[f64]) -> f64 {
            if !(t[1] > 0.0 && t[1] < 1.0 && t[2] > 0.0) {
                return f64::NEG_INFINITY;
            }
            -0.5 * t[0] * t[0] + t[1].ln() + 4.0 * (1.0 - t[1]).ln() - 0.5 * t[2] * t[2]
        }
        fn metropolis_params(&self) -> Vec<usize> {
            vec![0, 1, 2]
        }
    }

    fn check(summary: &crate::mcmc::PosteriorSummary, name: &str, mean: f64, sd: f64) {
        let row = summary.get(name).unwrap();
        let mcse_mean = row.sd / row.ess.sqrt();
        let mcse_sd = row.sd / (2.0 * row.ess).sqrt();
        assert!((row.mean - mean).abs() < 3.0 * mcse_mean, "{name}: mean {} vs {mean} (mcse {mcse_mean})", row.mean);
        assert!((row.sd - sd).abs() < 3.0 * mcse_sd, "{name}: sd {} vs {sd} (mcse {mcse_sd})", row.sd);
    }

    #[test]
    fn prior_recovery_without_data() {
        let config = SamplerConfig { n_chains: 4, burn_in: 2_000, samples: 20_000, thin: 1, seed: 11, adapt_window: 100 };
        let chains = run_sampler(&PriorOnly::new(), &config).unwrap();
        let s = summarize(&chains).unwrap();
        check(&s, "theta", 0.0, 1.0);
        // Beta(2, 5): mean 2/7, var 10/(49*8)
        check(&s, "p", 2.0 / 7.0, (10.0f64 / 392.0).sqrt());
        // half-normal(1): mean sqrt(2/pi), var 1 - 2/pi
        check(&s, "tau", (2.0 / std::f64::consts::PI).sqrt(), (1.0 - 2.0 / std::f64::consts::PI).sqrt());
        for rates in chains.acceptance_rates() {
            for (name, r) in rates {
                assert!((0.2..=0.6).contains(r), "{name} acceptance {r}");
            }
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let config = SamplerConfig { n_chains: 3, burn_in: 200, samples: 500, thin: 2, seed: 5, adapt_window: 50 };
        let a = run_sampler(&PriorOnly::new(), &config).unwrap();
        let b = run_sampler(&PriorOnly::new(), &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_draws(), 250);
        assert_eq!(a.n_chains(), 3);
        let c = run_sampler(&PriorOnly::new(), &config.with_seed(6)).unwrap();
        assert_ne!(a, c);
        // chains differ from each other
        assert_ne!(a.draws(0, 0), a.draws(1, 0));
    }

    struct Broken;
    impl Model for Broken {
        fn params(&self) -> &[ParamSpec] {
            &[]
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![]
        }
        fn log_joint(&self, _: &[f64]) -> f64 {
            f64::NAN
        }
        fn metropolis_params(&self) -> Vec<usize> {
            vec![]
        }
    }

    #[test]
    fn non_finite_initial_density_is_an_error() {
        let err = run_sampler(&Broken, &SamplerConfig::desk(1)).unwrap_err();
        assert!(matches!(err, McmcError::Initialization(_)));
    }

    /// Every proposal away from the start is rejected.
    struct Stuck(Vec<ParamSpec>);
    impl Model for Stuck {
        fn params(&self) -> &[ParamSpec] {
            &self.0
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn log_joint(&self, t: &[f64]) -> f64 {
            if t[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY }
        }
        fn metropolis_params(&self) -> Vec<usize> {
            vec![0]
        }
    }

    #[test]
    fn zero_acceptance_window_fails_adaptation() {
        let model = Stuck(vec![ParamSpec::new("x", Support::Real)]);
        let config = SamplerConfig { n_chains: 1, burn_in: 100, samples: 10, thin: 1, seed: 1, adapt_window: 50 };
        let err = run_sampler(&model, &config).unwrap_err();
        assert_eq!(err, McmcError::AdaptationFailure { param: "x".into(), iteration: 50 });
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = SamplerConfig { thin: 0, ..SamplerConfig::desk(1) };
        assert!(matches!(run_sampler(&PriorOnly::new(), &bad), Err(McmcError::Config(_))));
        let bad = SamplerConfig { n_chains: 0, ..SamplerConfig::desk(1) };
        assert!(bad.validate().is_err());
    }
}
