use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ChainSet, McmcError};

const MIN_DRAWS: usize = 100;

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect()
}

/// Split potential scale reduction factor. `None` for a single chain.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let halves = split(chains);
    let n = halves[0].len();
    if n < 2 {
        return None;
    }
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let w = mean(&halves.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b_over_n = var(&means);
    if w <= 0.0 {
        return Some(if b_over_n <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Some((var_plus / w).sqrt())
}

/// Autocovariance at lags 0..n (biased, 1/n normalization) via FFT.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// Effective sample size across split chains, using Geyer's initial
/// monotone sequence on the combined autocorrelation estimate.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let halves = split(chains);
    let m = halves.len();
    let n = halves.first().map_or(0, |c| c.len());
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let nf = n as f64;
    let acovs: Vec<Vec<f64>> = halves.iter().map(|c| autocovariance(c)).collect();
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let w = acovs.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { var(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |t: usize| -> f64 {
        let avg = acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (w - avg) / var_plus
    };

    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau_sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * tau_sum).max(1.0 / total.log10().max(1.0));
    total / tau
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    /// 2.5% quantile.
    pub lower: f64,
    /// 97.5% quantile.
    pub upper: f64,
    pub rhat: Option<f64>,
    pub ess: f64,
}

impl ParamSummary {
    /// Monte-Carlo standard error of the posterior mean.
    pub fn mcse(&self) -> f64 {
        self.sd / self.ess.max(1.0).sqrt()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub rows: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.rhat).reduce(f64::max)
    }
}

pub(crate) fn summarize_param(name: &str, chains: &[&[f64]]) -> ParamSummary {
    let mut pooled: Vec<f64> = chains.concat();
    let n = pooled.len() as f64;
    if let Some(&x) = pooled.first().filter(|&&x| pooled.iter().all(|&v| v == x)) {
        // fixed parameter
        return ParamSummary {
            name: name.to_string(),
            mean: x,
            median: x,
            sd: 0.0,
            lower: x,
            upper: x,
            rhat: (chains.len() > 1).then_some(1.0),
            ess: n,
        };
    }
    let m = pooled.iter().sum::<f64>() / n;
    let sd = if pooled.len() > 1 {
        (pooled.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    pooled.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        mean: m,
        median: quantile_type7(&pooled, 0.5),
        sd,
        lower: quantile_type7(&pooled, 0.025),
        upper: quantile_type7(&pooled, 0.975),
        rhat: split_rhat(chains),
        ess: effective_sample_size(chains),
    }
}

/// Posterior mean, median, sd, 95% interval, split-R-hat and ESS for every
/// parameter in `chains`.
pub fn summarize(chains: &ChainSet) -> Result<PosteriorSummary, McmcError> {
    let found = chains.n_draws() * chains.n_chains();
    if found < MIN_DRAWS {
        return Err(McmcError::TooFewDraws { needed: MIN_DRAWS, found });
    }
    if chains.n_chains() < 2 {
        log::warn!("single chain: R-hat is not reported");
    }
    let rows = (0..chains.names().len())
        .map(|p| {
            let per_chain: Vec<&[f64]> = (0..chains.n_chains()).map(|c| chains.draws(c, p)).collect();
            summarize_param(&chains.names()[p], &per_chain)
        })
        .collect();
    Ok(PosteriorSummary { rows })
}
