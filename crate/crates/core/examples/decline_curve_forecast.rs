//! Multi-well decline-curve forecast with localized ES-MDA: mismatch,
//! P10/P50/P90 bands of one well and coverage of the hidden reference.
//!
//! `cargo run --release --example decline_curve_forecast`

use dsi::diagnostics::{coverage, normalized_mismatch, percentile_band, P10_P50_P90};
use dsi::testbed::{build_decline_case_with, DeclineSpec};
use dsi::{run_dsi_esmda, EsmdaConfig, LocalizationSpec, QuantityKind};

fn main() -> dsi::Result<()> {
    let case = build_decline_case_with(&DeclineSpec { n_members: 500, seed: 2, ..DeclineSpec::default() })?;
    let cfg = EsmdaConfig {
        localization: LocalizationSpec::new(1500.0, 1500.0, 720.0, 0.0)?,
        rng_seed: 2,
        ..EsmdaConfig::default()
    };
    let post = run_dsi_esmda(&case.prior, &case.observations, &cfg)?;

    let prior_m = normalized_mismatch(&case.prior, &case.observations)?;
    let post_m = normalized_mismatch(&post, &case.observations)?;
    println!("O_Nd prior {:.2} +- {:.2}, posterior {:.3} +- {:.3}", prior_m.mean, prior_m.std, post_m.mean, post_m.std);

    let layout = case.layout();
    let fc = layout.forecast_indices();
    let ref_f = nalgebra::DVector::from_iterator(fc.len(), fc.iter().map(|&i| case.reference[i]));
    println!(
        "forecast P10-P90 coverage: prior {:.0}%, posterior {:.0}%",
        100.0 * coverage(&case.prior.forecast_part()?, &ref_f, 0.1, 0.9)?,
        100.0 * coverage(&post.forecast_part()?, &ref_f, 0.1, 0.9)?
    );

    let (lo, mid, hi) = percentile_band(&post, &P10_P50_P90)?.p10_p50_p90().expect("requested percentiles");
    let well = layout.element(0).well_id.clone();
    println!("\nwell {well} oil rate (posterior)");
    println!("  day   hist     P10     P50     P90   truth");
    for (i, e) in layout.elements().iter().enumerate() {
        if e.well_id == well && e.kind == QuantityKind::OilRate && (e.time as usize / 30) % 3 == 0 {
            println!(
                "  {:>4} {:>5} {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
                e.time, e.is_history, lo[i], mid[i], hi[i], case.reference[i]
            );
        }
    }
    Ok(())
}
