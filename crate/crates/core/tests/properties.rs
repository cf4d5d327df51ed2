//! Property tests spanning several modules.

use std::collections::BTreeSet;

use dsi::diagnostics::normalized_mismatch;
use dsi::rml::{run_dsi_rml, RmlConfig};
use dsi::testbed::{build_decline_case_with, build_linear_case, DeclinePrior, DeclineSpec, LinearDims, MONTH_DAYS};
use dsi::{run_dsi_esmda, EsmdaConfig, LocalizationSpec, MdaSchedule};
use proptest::prelude::*;

/// Inflation factors with `sum 1/alpha = 1` from arbitrary positive weights.
fn schedule(weights: &[f64]) -> MdaSchedule {
    let total: f64 = weights.iter().sum();
    MdaSchedule::new(weights.iter().map(|w| total / w).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_valid_schedule_reduces_mismatch(
        weights in proptest::collection::vec(0.2f64..5.0, 1..6),
        seed in 0u64..1000,
        decline in any::<bool>(),
    ) {
        let (prior, obs) = if decline {
            let c = build_decline_case_with(&DeclineSpec { n_wells: 3, n_steps: 20, history_cut: 10, n_members: 100, seed, ..DeclineSpec::default() }).unwrap();
            (c.prior, c.observations)
        } else {
            let (p, o, _) = build_linear_case(LinearDims { n_history: 10, n_forecast: 10, n_members: 100 }, seed).unwrap();
            (p, o)
        };
        let cfg = EsmdaConfig { schedule: schedule(&weights), rng_seed: seed, ..EsmdaConfig::default() };
        let post = run_dsi_esmda(&prior, &obs, &cfg).unwrap();
        let before = normalized_mismatch(&prior, &obs).unwrap().mean;
        let after = normalized_mismatch(&post, &obs).unwrap().mean;
        prop_assert!(after < before, "{} -> {}", before, after);
    }

    #[test]
    fn parallel_and_serial_posteriors_identical(seed in 0u64..1000, localize in any::<bool>()) {
        let c = build_decline_case_with(&DeclineSpec { n_wells: 3, n_steps: 12, history_cut: 6, n_members: 40, seed, ..DeclineSpec::default() }).unwrap();
        let mut cfg = EsmdaConfig { rng_seed: seed, ..EsmdaConfig::default() };
        if localize {
            cfg.localization = LocalizationSpec::new(900.0, 1400.0, 200.0, 0.4).unwrap();
        }
        let a = run_dsi_esmda(&c.prior, &c.observations, &cfg).unwrap();
        cfg.parallel = false;
        let b = run_dsi_esmda(&c.prior, &c.observations, &cfg).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn decline_rates_non_negative(z in proptest::collection::vec(-8.0f64..8.0, 5), step in 0usize..400) {
        let p = DeclinePrior::default().params(&z);
        let t = step as f64 * MONTH_DAYS;
        prop_assert!(p.oil_rate(t) >= 0.0 && p.water_rate(t) >= 0.0);
        prop_assert!((0.0..=p.wmax).contains(&p.water_cut(t)) && p.t_bt > 0.0);
    }
}

/// Posterior samples matched to the noise level give a mismatch near one half.
#[test]
fn linear_posterior_mismatch_near_one_half() {
    let (prior, obs, _) = build_linear_case(LinearDims { n_history: 20, n_forecast: 20, n_members: 2000 }, 5).unwrap();
    let esmda = EsmdaConfig { truncate_negative_kinds: BTreeSet::new(), rng_seed: 5, ..EsmdaConfig::default() };
    let post = run_dsi_esmda(&prior, &obs, &esmda).unwrap();
    let m = normalized_mismatch(&post, &obs).unwrap().mean;
    assert!((0.25..=1.0).contains(&m), "ES-MDA posterior mismatch {m}");
    let rml = RmlConfig { anamorphosis: false, n_samples: 500, energy_xi: 1.0, rng_seed: 5, ..RmlConfig::default() };
    let out = run_dsi_rml(&prior, &obs, &rml).unwrap();
    let m = normalized_mismatch(&out.posterior, &obs).unwrap().mean;
    assert!((0.25..=1.0).contains(&m), "RML posterior mismatch {m}");
}
