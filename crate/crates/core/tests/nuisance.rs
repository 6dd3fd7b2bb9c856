mod common;

use common::{cond_mean, discrete, schema};
use tmle_mnar::data::{CovariateOrder, ObservedDataset};
use tmle_mnar::nuisance::{
    check_positivity, fit_nuisances_mnar_a, fit_nuisances_mnar_b, positivity_from_probabilities, NuisanceSpecs,
};
use tmle_mnar::Error;

fn m(d: &ObservedDataset, k: usize, i: usize) -> Option<f64> {
    d.partial_value(k, i)
}

#[test]
fn saturated_block_probabilities_are_cell_frequencies() {
    let d = discrete(2000, 2, 11, true).collapse_covariate_block();
    let ns = fit_nuisances_mnar_a(&d, &NuisanceSpecs::saturated(), 1.0).unwrap();
    let lo = d.observed_column(0);
    let n = d.n();
    for i in 0..n {
        let (f, c) = cond_mean(n, |j| lo[j] == lo[i], |j| f64::from(d.covariates_observed(j)));
        assert!(c > 0);
        assert!((ns.prob_rl[0][i] - f).abs() < 1e-8);
        if !d.covariates_observed(i) {
            continue;
        }
        let same = |j: usize| {
            d.covariates_observed(j) && lo[j] == lo[i] && m(&d, 0, j) == m(&d, 0, i) && m(&d, 1, j) == m(&d, 1, i)
        };
        let (f, _) = cond_mean(n, same, |j| f64::from(d.exposure_observed(j)));
        assert!((ns.prob_ra[i] - f).abs() < 1e-8);
        let (f, _) = cond_mean(
            n,
            |j| same(j) && d.exposure_observed(j),
            |j| f64::from(d.exposure(j) == Some(1.0)),
        );
        assert!((ns.prob_a[i] - f).abs() < 1e-8, "{} vs {f}", ns.prob_a[i]);
    }
}

#[test]
fn saturated_sequential_probability_is_cell_frequency() {
    let d = discrete(2000, 2, 12, true)
        .coarsen_monotone(&CovariateOrder::identity(2))
        .unwrap();
    let ns = fit_nuisances_mnar_b(&d, &NuisanceSpecs::saturated(), 1.0, &CovariateOrder::identity(2)).unwrap();
    assert_eq!(ns.pi_rl.len(), 2);
    let lo = d.observed_column(0);
    let n = d.n();
    let mut checked = 0;
    for i in 0..n {
        if !d.variable_observed(0, i) {
            assert!(ns.prob_rl[1][i].is_nan());
            continue;
        }
        let (f, _) = cond_mean(
            n,
            |j| d.variable_observed(0, j) && lo[j] == lo[i] && m(&d, 0, j) == m(&d, 0, i),
            |j| f64::from(d.variable_observed(1, j)),
        );
        assert!((ns.prob_rl[1][i] - f).abs() < 1e-8);
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn single_covariate_sequential_equals_block() {
    let d = discrete(1500, 1, 13, true);
    let specs = NuisanceSpecs::saturated();
    let a = fit_nuisances_mnar_a(&d, &specs, 1.0).unwrap();
    let b = fit_nuisances_mnar_b(&d, &specs, 1.0, &CovariateOrder::identity(1)).unwrap();
    assert_eq!(a.blocks, b.blocks);
    assert_eq!(a.strata, b.strata);
    let same = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    assert!(same(&a.prob_a, &b.prob_a));
    assert!(same(&a.prob_ra, &b.prob_ra));
    assert!(same(&a.prob_rl[0], &b.prob_rl[0]));
}

#[test]
fn first_covariate_entirely_missing_is_an_empty_stratum() {
    let full = discrete(200, 2, 14, false);
    let n = full.n();
    let m2: Vec<Option<f64>> = (0..n).map(|i| full.partial_value(1, i)).collect();
    let a: Vec<Option<f64>> = (0..n).map(|i| full.exposure(i)).collect();
    let d = ObservedDataset::new(
        schema(2),
        full.outcome().to_vec(),
        a,
        vec![full.observed_column(0).to_vec()],
        vec![vec![None; n], m2],
    )
    .unwrap()
    .coarsen_monotone(&CovariateOrder::identity(2))
    .unwrap();
    let err = fit_nuisances_mnar_b(&d, &NuisanceSpecs::saturated(), 1.0, &CovariateOrder::identity(2)).unwrap_err();
    assert!(matches!(err, Error::EmptyStratum(_)), "{err}");
}

#[test]
fn fully_observed_data_gives_unit_observation_probabilities() {
    let d = discrete(500, 2, 15, false);
    for specs in [NuisanceSpecs::saturated(), NuisanceSpecs::default()] {
        let ns = fit_nuisances_mnar_a(&d, &specs, 1.0).unwrap();
        for i in 0..d.n() {
            assert!(ns.prob_ra[i] > 1.0 - 1e-12);
            assert!(ns.prob_rl[0][i] > 1.0 - 1e-12);
        }
        let report = check_positivity(&ns, &d, &vec![1.0; d.n()]);
        assert!(report
            .models
            .iter()
            .skip(1)
            .all(|s| s.floored == 0 && s.min > 1.0 - 1e-12));
    }
}

#[test]
fn fitting_strata_follow_the_chain() {
    let d = discrete(800, 2, 16, true)
        .coarsen_monotone(&CovariateOrder::identity(2))
        .unwrap();
    let ns = fit_nuisances_mnar_b(&d, &NuisanceSpecs::saturated(), 0.0, &CovariateOrder::identity(2)).unwrap();
    for i in 0..d.n() {
        assert!(ns.strata[0][i]);
        assert_eq!(ns.strata[1][i], d.variable_observed(0, i));
        assert_eq!(ns.strata[2][i], d.variable_observed(0, i) && d.variable_observed(1, i));
        assert_eq!(ns.prob_a[i].is_nan(), !ns.strata[2][i]);
        assert!(!ns.prob_rl[0][i].is_nan());
    }
}

#[test]
fn positivity_report_examples() {
    let r = positivity_from_probabilities(&[0.5, 0.2, 0.9], &[0.3, 0.8, 1.0], &[&[0.2, 0.6, 0.4]], 0.01);
    assert_eq!(r.floored_total(), 0);
    // combined weight of the smallest product 0.5 * 0.3 * 0.2
    assert!((r.max_weight - 1.0 / 0.03).abs() < 1e-9);

    let r = positivity_from_probabilities(&[0.004, 0.5], &[1.0, 1.0], &[], 0.01);
    assert_eq!(r.models[0].floored, 1);
    assert_eq!(r.models[0].min, 0.01);
    assert!((r.max_weight - 100.0).abs() < 1e-9);
}
