use super::*;
use crate::data::Block;
use crate::mcmc::ChainRng;
use rand::SeedableRng;

fn rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

#[test]
fn control_arm_survival_is_exponential() {
    let params = GenerationParams {
        n_participants: 100_000,
        p_trt: 0.5,
        p_neg: NegativeShare::Fixed(0.0),
        delta_pos: -0.5,
        ..Default::default()
    };
    let ipd = generate_trial(&params, &mut rng(1));
    let control: Vec<f64> = ipd.subjects.iter().filter(|s| !s.trt).map(|s| s.time).collect();
    let n = control.len() as f64;
    assert!(n > 45_000.0);
    for t in [1.0, 3.0, 6.67, 12.0] {
        let s_hat = control.iter().filter(|&&x| x > t).count() as f64 / n;
        let s = (-0.15 * t).exp();
        let se = (s * (1.0 - s) / n).sqrt();
        assert!((s_hat - s).abs() < 3.0 * se, "t={t}: {s_hat} vs {s}");
    }
    let mean = control.iter().sum::<f64>() / n;
    assert!((mean - 1.0 / 0.15).abs() < 3.0 * (1.0 / 0.15) / n.sqrt());
}

#[test]
fn large_trial_recovers_stratum_effect() {
    let params = GenerationParams {
        n_participants: 100_000,
        p_neg: NegativeShare::Fixed(0.0),
        delta_pos: -0.25,
        ..Default::default()
    };
    let ipd = generate_trial(&params, &mut rng(2));
    assert_eq!(ipd.n_negative(), 0);
    let fit = ipd.stratum(false).fit(Covariates::Trt).unwrap();
    assert!(fit.converged);
    assert!((fit.coefficients[0] + 0.25).abs() < 0.02, "{}", fit.coefficients[0]);
}

#[test]
fn null_effect_estimates_are_within_three_se() {
    let params = GenerationParams::default();
    let mut r = rng(3);
    let reps = 300;
    let mut outside = 0;
    for _ in 0..reps {
        let fit = generate_trial(&params, &mut r).fit(Covariates::Trt).unwrap();
        assert!(fit.converged);
        if fit.coefficients[0].abs() > 3.0 * fit.standard_errors[0] {
            outside += 1;
        }
    }
    // P(|Z| > 3) = 0.0027
    assert!(outside <= 4, "{outside} of {reps}");
}

#[test]
fn subgroup_estimates_centre_on_truth() {
    let params = GenerationParams { delta_pos: -0.25, delta_neg: 0.0, ..Default::default() };
    let mut r = rng(4);
    let (mut pos, mut neg) = (0.0, 0.0);
    let reps = 500;
    for _ in 0..reps {
        let ipd = generate_trial(&params, &mut r);
        pos += ipd.stratum(false).fit(Covariates::Trt).unwrap().coefficients[0];
        neg += ipd.stratum(true).fit(Covariates::Trt).unwrap().coefficients[0];
    }
    assert!((pos / reps as f64 + 0.25).abs() < 0.02, "{}", pos / reps as f64);
    assert!((neg / reps as f64).abs() < 0.02, "{}", neg / reps as f64);
}

#[test]
fn unadjusted_mixed_lies_between_strata() {
    let params = GenerationParams {
        n_participants: 20_000,
        p_neg: NegativeShare::Fixed(0.4),
        delta_pos: -0.5,
        delta_neg: 0.3,
        ..Default::default()
    };
    let mut r = rng(5);
    let mut between = 0;
    for _ in 0..20 {
        let ipd = generate_trial(&params, &mut r);
        let pos = ipd.stratum(false).fit(Covariates::Trt).unwrap().coefficients[0];
        let neg = ipd.stratum(true).fit(Covariates::Trt).unwrap().coefficients[0];
        let mix = ipd.fit(Covariates::Trt).unwrap().coefficients[0];
        if pos.min(neg) < mix && mix < pos.max(neg) {
            between += 1;
        }
    }
    assert!(between >= 19);
}

#[test]
fn same_seed_same_trial() {
    let params = GenerationParams { delta_pos: -0.3, delta_neg: 0.2, ..Default::default() };
    let a = generate_trial(&params, &mut rng(9));
    let b = generate_trial(&params, &mut rng(9));
    assert_eq!(a, b);
    assert_eq!(a.fit(Covariates::TrtBiomarker).unwrap(), b.fit(Covariates::TrtBiomarker).unwrap());
    assert_ne!(a, generate_trial(&params, &mut rng(10)));
}

#[test]
fn censoring_caps_follow_up() {
    let params = GenerationParams { censor_time: Some(5.0), ..Default::default() };
    let ipd = generate_trial(&params, &mut rng(6));
    assert!(ipd.subjects.iter().all(|s| s.time <= 5.0 && s.time > 0.0));
    assert!(ipd.subjects.iter().all(|s| s.event == (s.time < 5.0)));
    let censored = ipd.subjects.iter().filter(|s| !s.event).count();
    // P(T > 5) = exp(-0.75) ~ 0.47 in the control arm
    assert!(censored > 100);
}

#[test]
fn csv_layout() {
    let ipd = TrialIpd {
        subjects: vec![
            Subject { time: 1.5, event: true, trt: false, biomarker_negative: true },
            Subject { time: 0.25, event: false, trt: true, biomarker_negative: false },
        ],
    };
    assert_eq!(ipd.to_csv(), "id,time,event,trt,biomarker_negative\n1,1.5,1,0,1\n2,0.25,0,1,0\n");
}

#[test]
fn invalid_params_rejected() {
    assert!(GenerationParams::default().validate().is_ok());
    for bad in [
        GenerationParams { n_participants: 3, ..Default::default() },
        GenerationParams { p_trt: 1.0, ..Default::default() },
        GenerationParams { baseline_rate: 0.0, ..Default::default() },
        GenerationParams { p_neg: NegativeShare::Fixed(1.2), ..Default::default() },
    ] {
        assert!(matches!(bad.validate(), Err(SurvivalError::Params(_))));
    }
}

#[test]
fn study_records_by_reporting_pattern() {
    let params = GenerationParams { delta_pos: -0.25, delta_neg: 0.25, ..Default::default() };
    let ipd = generate_trial(&params, &mut rng(7));

    let pos = make_study_record(&ipd, "a", Reporting::PositiveOnly).unwrap();
    assert_eq!(pos.block(), Block::PositiveOnly);
    let direct = ipd.stratum(false).fit(Covariates::Trt).unwrap();
    assert_eq!(pos.positive.unwrap().y, direct.coefficients[0]);
    assert_eq!(pos.positive.unwrap().se, direct.standard_errors[0]);

    let both = make_study_record(&ipd, "b", Reporting::Both).unwrap();
    assert_eq!(both.block(), Block::Both);
    assert_eq!(both.negative.unwrap().y, ipd.stratum(true).fit(Covariates::Trt).unwrap().coefficients[0]);

    let adj = make_study_record(&ipd, "c", Reporting::Mixed { adjusted: true }).unwrap();
    let two = ipd.fit(Covariates::TrtBiomarker).unwrap();
    assert_eq!(adj.mixed.unwrap().y, two.coefficients[0]);
    let unadj = make_study_record(&ipd, "c", Reporting::Mixed { adjusted: false }).unwrap();
    assert_eq!(unadj.mixed.unwrap().y, ipd.fit(Covariates::Trt).unwrap().coefficients[0]);
    assert_ne!(adj.mixed, unadj.mixed);

    let expected = beta_from_counts(ipd.n_negative() as u64, ipd.len() as u64).unwrap();
    assert_eq!(adj.proportion_prior, Some(expected));
    assert_eq!(unadj.proportion_prior, Some(expected));
}

#[test]
fn prior_from_140_of_350() {
    let ipd = TrialIpd {
        subjects: (0..350)
            .map(|i| Subject { time: 1.0 + i as f64, event: true, trt: i % 2 == 0, biomarker_negative: i < 140 })
            .collect(),
    };
    let rec = make_study_record(&ipd, "x", Reporting::Mixed { adjusted: false }).unwrap();
    let p: f64 = 140.0 / 350.0;
    let s = p * (1.0 - p) / (p * (1.0 - p) / 350.0) - 1.0;
    let prior = rec.proportion_prior.unwrap();
    assert!((prior.alpha - p * s).abs() < 1e-9 && (prior.beta - (1.0 - p) * s).abs() < 1e-9);
}

#[test]
fn single_stratum_trial_cannot_report_mixed_prior() {
    let params = GenerationParams { p_neg: NegativeShare::Fixed(0.0), ..Default::default() };
    let ipd = generate_trial(&params, &mut rng(8));
    assert!(matches!(
        make_study_record(&ipd, "x", Reporting::Mixed { adjusted: false }),
        Err(SurvivalError::Prior(_))
    ));
    assert!(matches!(
        make_study_record(&ipd, "x", Reporting::Both),
        Err(SurvivalError::Cox { population: "negative", .. })
    ));
}
