//! Saturated working models on discrete data reproduce direct summation over
//! covariate cells.

mod common;

use common::discrete;
use common::oracle::{g_formula, oracle_block, oracle_sequential};
use tmle_mnar::data::CovariateOrder;
use tmle_mnar::estimators::{
    estimate_ice_a, estimate_ice_b, estimate_ipw_a, estimate_ipw_b, estimate_tmle_a, estimate_tmle_b,
    tmle_complete_data,
};
use tmle_mnar::nuisance::NuisanceSpecs;

#[test]
fn block_family_matches_direct_summation() {
    let d = discrete(2000, 2, 11, true);
    let specs = NuisanceSpecs::saturated();
    for a in [0.0, 1.0] {
        let oracle = oracle_block(&d, a);
        let ice = estimate_ice_a(&d, &specs, a).unwrap().psi_hat;
        let ipw = estimate_ipw_a(&d, &specs, a).unwrap().psi_hat;
        let tmle = estimate_tmle_a(&d, &specs, a).unwrap().psi_hat;
        assert!((ice - oracle).abs() < 1e-8, "ice {ice} oracle {oracle}");
        assert!((ipw - oracle).abs() < 1e-8, "ipw {ipw} oracle {oracle}");
        assert!((tmle - oracle).abs() < 1e-6, "tmle {tmle} oracle {oracle}");
    }
}

#[test]
fn sequential_family_matches_direct_summation() {
    let d = discrete(2000, 2, 12, true);
    let specs = NuisanceSpecs::saturated();
    let order = CovariateOrder::identity(2);
    for a in [0.0, 1.0] {
        let oracle = oracle_sequential(&d, a);
        let ice = estimate_ice_b(&d, &specs, a, &order).unwrap().psi_hat;
        let ipw = estimate_ipw_b(&d, &specs, a, &order).unwrap().psi_hat;
        let tmle = estimate_tmle_b(&d, &specs, a, &order).unwrap().psi_hat;
        assert!((ice - oracle).abs() < 1e-8, "ice {ice} oracle {oracle}");
        assert!((ipw - oracle).abs() < 1e-8, "ipw {ipw} oracle {oracle}");
        assert!((tmle - oracle).abs() < 1e-6, "tmle {tmle} oracle {oracle}");
    }
}

#[test]
fn complete_data_tmle_is_standardisation() {
    let d = discrete(2000, 2, 13, false);
    let specs = NuisanceSpecs::saturated();
    let tmle = tmle_complete_data(&d, &specs, 1.0).unwrap().psi_hat;
    let oracle = g_formula(&d, 1.0);
    assert!((tmle - oracle).abs() < 1e-8, "{tmle} vs {oracle}");
    let ice = estimate_ice_a(&d, &specs, 1.0).unwrap().psi_hat;
    assert!((ice - oracle).abs() < 1e-8);
}
