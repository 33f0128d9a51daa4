//! Cox proportional-hazards regression by Newton-Raphson on the Breslow
//! partial likelihood.

use thiserror::Error;

const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-8;
const REL_LL_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 30;
/// Coefficients beyond this are treated as divergence toward a monotone
/// likelihood rather than an estimate.
const DIVERGENCE_BOUND: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxError {
    #[error("need at least 2 events, found {0}")]
    TooFewEvents(usize),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("input lengths differ")]
    Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    /// Square roots of the diagonal of the inverse observed information.
    pub standard_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub score: Vec<f64>,
}

/// Log partial likelihood, score and observed information at `beta`.
/// `x[k]` is the k-th covariate column.
pub(crate) struct Evaluation {
    pub ll: f64,
    pub score: Vec<f64>,
    pub info: Vec<Vec<f64>>,
}

/// Subjects ordered by decreasing time, so risk sets grow as we walk.
fn descending_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    order
}

pub(crate) fn evaluate(times: &[f64], events: &[bool], x: &[Vec<f64>], beta: &[f64], order: &[usize]) -> Evaluation {
    let p = x.len();
    let n = times.len();
    let eta: Vec<f64> = (0..n).map(|i| (0..p).map(|k| x[k][i] * beta[k]).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; p];
    let mut ll = 0.0;
    let mut score = vec![0.0; p];
    let mut info = vec![vec![0.0; p]; p];

    let mut g = 0;
    while g < n {
        // everyone tied at this time enters the risk set before any of them fails
        let t = times[order[g]];
        let mut end = g;
        while end < n && times[order[end]] == t {
            let i = order[end];
            let w = (eta[i] - shift).exp();
            s0 += w;
            for a in 0..p {
                s1[a] += w * x[a][i];
                for b in 0..p {
                    s2[a][b] += w * x[a][i] * x[b][i];
                }
            }
            end += 1;
        }
        let log_s0 = s0.ln() + shift;
        for &i in &order[g..end] {
            if !events[i] {
                continue;
            }
            ll += eta[i] - log_s0;
            for a in 0..p {
                let ma = s1[a] / s0;
                score[a] += x[a][i] - ma;
                for b in 0..p {
                    info[a][b] += s2[a][b] / s0 - ma * s1[b] / s0;
                }
            }
        }
        g = end;
    }
    Evaluation { ll, score, info }
}

/// Cholesky factor of a symmetric positive-definite matrix, or `None`.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = a.len();
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 1e-12 * scale) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = l.len();
    let mut y = vec![0.0; p];
    for i in 0..p {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (y[i] - (i + 1..p).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

fn inverse_diagonal(l: &[Vec<f64>]) -> Vec<f64> {
    let p = l.len();
    (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            cholesky_solve(l, &e)[j]
        })
        .collect()
}

/// Fits a Cox model to right-censored data.
///
/// A design whose information matrix is singular at zero (a constant or
/// collinear covariate) is an error. Divergence of a coefficient, as under
/// a monotone likelihood, returns a fit with `converged == false`.
pub fn fit_cox(times: &[f64], events: &[bool], covariates: &[Vec<f64>]) -> Result<CoxFit, CoxError> {
    let n = times.len();
    if events.len() != n || covariates.iter().any(|c| c.len() != n) || covariates.is_empty() {
        return Err(CoxError::Shape);
    }
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events < 2 {
        return Err(CoxError::TooFewEvents(n_events));
    }
    let p = covariates.len();
    let order = descending_order(times);
    let mut beta = vec![0.0; p];
    let mut cur = evaluate(times, events, covariates, &beta, &order);
    if cholesky(&cur.info).is_none() {
        return Err(CoxError::DegenerateDesign(
            "a covariate is constant or collinear within the risk sets".into(),
        ));
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        if cur.score.iter().all(|s| s.abs() < SCORE_TOL) {
            converged = true;
            break;
        }
        let Some(l) = cholesky(&cur.info) else { break };
        let step = cholesky_solve(&l, &cur.score);
        iterations += 1;

        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let ev = evaluate(times, events, covariates, &trial, &order);
            if ev.ll.is_finite() && ev.ll >= cur.ll {
                next = Some((trial, ev));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, ev)) = next else { break };
        let rel_change = (ev.ll - cur.ll).abs() / cur.ll.abs().max(1e-300);
        beta = trial;
        cur = ev;
        if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
            break;
        }
        if rel_change < REL_LL_TOL || cur.score.iter().all(|s| s.abs() < SCORE_TOL) {
            converged = true;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite() || b.abs() > DIVERGENCE_BOUND) {
        converged = false;
    }

    let standard_errors = match cholesky(&cur.info) {
        Some(l) => inverse_diagonal(&l).into_iter().map(f64::sqrt).collect(),
        None => {
            converged = false;
            vec![f64::INFINITY; p]
        }
    };
    Ok(CoxFit {
        coefficients: beta,
        standard_errors,
        converged,
        iterations,
        log_likelihood: cur.ll,
        score: cur.score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::ChainRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Breslow log partial likelihood summed subject by subject, with the
    /// risk set found by scanning everyone.
    fn brute_ll(times: &[f64], events: &[bool], x: &[Vec<f64>], beta: &[f64]) -> f64 {
        let eta = |i: usize| x.iter().zip(beta).map(|(c, b)| c[i] * b).sum::<f64>();
        (0..times.len())
            .filter(|&i| events[i])
            .map(|i| {
                let denom: f64 = (0..times.len()).filter(|&j| times[j] >= times[i]).map(|j| eta(j).exp()).sum();
                eta(i) - denom.ln()
            })
            .sum()
    }

    /// Golden-section maximization of a unimodal function on [lo, hi].
    fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut a = hi - r * (hi - lo);
        let mut b = lo + r * (hi - lo);
        let (mut fa, mut fb) = (f(a), f(b));
        while hi - lo > 1e-10 {
            if fa < fb {
                lo = a;
                a = b;
                fa = fb;
                b = lo + r * (hi - lo);
                fb = f(b);
            } else {
                hi = b;
                b = a;
                fb = fa;
                a = hi - r * (hi - lo);
                fa = f(a);
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn four_subject_example_matches_golden_section() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        let trt = vec![vec![0.0, 1.0, 0.0, 1.0]];
        let fit = fit_cox(&times, &events, &trt).unwrap();
        assert!(fit.converged);
        let oracle = golden_max(|b| brute_ll(&times, &events, &trt, &[b]), -5.0, 5.0);
        assert!((fit.coefficients[0] - oracle).abs() < 1e-4, "{} vs {oracle}", fit.coefficients[0]);
        assert!(fit.score[0].abs() < 1e-6);
        assert!((fit.log_likelihood - brute_ll(&times, &events, &trt, &fit.coefficients)).abs() < 1e-12);
    }

    #[test]
    fn separated_four_subjects_have_no_interior_maximum() {
        // both controls fail before both treated subjects
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        let trt = vec![vec![0.0, 0.0, 1.0, 1.0]];
        let fit = fit_cox(&times, &events, &trt).unwrap();
        assert!(!fit.converged);
        let oracle = golden_max(|b| brute_ll(&times, &events, &trt, &[b]), -5.0, 5.0);
        assert!(oracle < -4.999);
        let ll = |b: f64| brute_ll(&times, &events, &trt, &[b]);
        assert!(ll(-10.0) > ll(-5.0) && ll(-5.0) > ll(0.0));
    }

    #[test]
    fn single_arm_is_degenerate() {
        let err = fit_cox(&[1.0, 2.0, 3.0], &[true; 3], &[vec![1.0; 3]]).unwrap_err();
        assert!(matches!(err, CoxError::DegenerateDesign(_)));
        let err = fit_cox(&[1.0, 2.0, 3.0], &[true; 3], &[vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap_err();
        assert!(matches!(err, CoxError::DegenerateDesign(_)));
    }

    #[test]
    fn too_few_events() {
        let err = fit_cox(&[1.0, 2.0], &[true, false], &[vec![0.0, 1.0]]).unwrap_err();
        assert_eq!(err, CoxError::TooFewEvents(1));
    }

    #[test]
    fn separated_arms_do_not_converge() {
        // every treated subject outlives every control
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let trt = vec![vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]];
        let fit = fit_cox(&times, &[true; 6], &trt).unwrap();
        assert!(!fit.converged);
        assert!(fit.coefficients[0] < -10.0);
    }

    #[test]
    fn ties_use_full_risk_set() {
        let times = [1.0, 1.0, 2.0, 2.0, 3.0];
        let events = [true, true, true, false, true];
        let x = vec![vec![0.0, 1.0, 1.0, 0.0, 1.0]];
        for b in [-1.0, 0.0, 0.7] {
            let ev = evaluate(&times, &events, &x, &[b], &descending_order(&times));
            assert!((ev.ll - brute_ll(&times, &events, &x, &[b])).abs() < 1e-12);
        }
    }

    #[test]
    fn two_covariate_score_and_information_match_finite_differences() {
        let mut rng = ChainRng::seed_from_u64(8);
        let n = 40;
        let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let x = vec![
            (0..n).map(|_| rng.random_range(0..2) as f64).collect::<Vec<_>>(),
            (0..n).map(|_| rng.random_range(0..2) as f64).collect::<Vec<_>>(),
        ];
        let beta = [0.3, -0.4];
        let order = descending_order(&times);
        let ev = evaluate(&times, &events, &x, &beta, &order);
        let h = 1e-5;
        for a in 0..2 {
            let mut up = beta;
            let mut dn = beta;
            up[a] += h;
            dn[a] -= h;
            let (eu, ed) = (evaluate(&times, &events, &x, &up, &order), evaluate(&times, &events, &x, &dn, &order));
            assert!(((eu.ll - ed.ll) / (2.0 * h) - ev.score[a]).abs() < 1e-6);
            for b in 0..2 {
                let d2 = -(eu.score[b] - ed.score[b]) / (2.0 * h);
                assert!((d2 - ev.info[a][b]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn random_small_datasets_match_golden_section() {
        let mut rng = ChainRng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 40 {
            let n = rng.random_range(4..=8);
            let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let trt: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
            let events = vec![true; n];
            let x = vec![trt];
            let Ok(fit) = fit_cox(&times, &events, &x) else { continue };
            if !fit.converged {
                continue;
            }
            let oracle = golden_max(|b| brute_ll(&times, &events, &x, &[b]), -5.0, 5.0);
            if oracle.abs() > 4.9 {
                continue;
            }
            assert!((fit.coefficients[0] - oracle).abs() < 1e-4);
            assert!(fit.score[0].abs() < 1e-6);
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn converged_fits_have_zero_score(seed in 0u64..500) {
            let mut rng = ChainRng::seed_from_u64(seed);
            let n = 60;
            let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
            let x = vec![
                (0..n).map(|_| rng.random_range(0..2) as f64).collect::<Vec<_>>(),
                (0..n).map(|_| rng.random_range(0..2) as f64).collect::<Vec<_>>(),
            ];
            if let Ok(fit) = fit_cox(&times, &events, &x) {
                if fit.converged {
                    prop_assert!(fit.score.iter().all(|s| s.abs() < 1e-6));
                    prop_assert!(fit.standard_errors.iter().all(|s| *s > 0.0 && s.is_finite()));
                }
            }
        }
    }
}
