//! A reference drawn from the tail of the prior: the posterior P50 moves
//! toward the truth even though the prior band misses it.
//!
//! `cargo run --release --example biased_prior`

use dsi::diagnostics::{percentile_band, P10_P50_P90};
use dsi::testbed::{build_decline_case_with, DeclineSpec, ReferenceDraw};
use dsi::{run_dsi_esmda, EsmdaConfig};

fn main() -> dsi::Result<()> {
    let spec = DeclineSpec { n_members: 500, seed: 4, reference: ReferenceDraw::Biased { z: 2.326 }, ..DeclineSpec::default() };
    let case = build_decline_case_with(&spec)?;
    let post = run_dsi_esmda(&case.prior, &case.observations, &EsmdaConfig { rng_seed: 4, ..EsmdaConfig::default() })?;

    let prior_p50 = percentile_band(&case.prior, &P10_P50_P90)?.column(0.5).expect("P50");
    let post_p50 = percentile_band(&post, &P10_P50_P90)?.column(0.5).expect("P50");
    let fc = case.layout().forecast_indices();
    let closer = fc
        .iter()
        .filter(|&&i| (post_p50[i] - case.reference[i]).abs() < (prior_p50[i] - case.reference[i]).abs())
        .count();
    println!("posterior P50 closer to the reference on {closer}/{} forecast elements", fc.len());
    for &i in fc.iter().step_by(fc.len() / 6) {
        println!(
            "  {:>10}  prior P50 {:>8.1}  posterior P50 {:>8.1}  truth {:>8.1}",
            case.layout().element(i).id,
            prior_p50[i],
            post_p50[i],
            case.reference[i]
        );
    }
    Ok(())
}
