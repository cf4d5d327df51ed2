//! ES-MDA in data space on a linear-Gaussian problem, checked against the
//! closed-form posterior.
//!
//! `cargo run --release --example linear_gaussian_esmda`

use std::collections::BTreeSet;

use dsi::diagnostics::normalized_mismatch;
use dsi::testbed::{build_linear_case, LinearDims};
use dsi::{run_dsi_esmda, EsmdaConfig, MdaSchedule};

fn main() -> dsi::Result<()> {
    let dims = LinearDims { n_history: 10, n_forecast: 10, n_members: 5000 };
    let (prior, obs, exact) = build_linear_case(dims, 7)?;

    for n_a in [1, 4] {
        let cfg = EsmdaConfig {
            schedule: MdaSchedule::constant(n_a)?,
            energy_xi: 1.0,
            truncate_negative_kinds: BTreeSet::new(),
            rng_seed: 7,
            ..EsmdaConfig::default()
        };
        let post = run_dsi_esmda(&prior, &obs, &cfg)?;
        let mean = post.mean();
        let anomalies = dsi::ensemble::anomalies(post.data())?;
        let var = anomalies.row_iter().map(|r| r.norm_squared()).collect::<Vec<_>>();

        println!("N_a = {n_a}");
        println!("  element   mean  exact_mean     var  exact_var");
        for i in (0..post.n_data()).step_by(4) {
            println!(
                "  {:>7} {:>6.3} {:>11.3} {:>7.3} {:>10.3}",
                post.layout().element(i).id,
                mean[i],
                exact.posterior_mean[i],
                var[i],
                exact.posterior_cov[(i, i)]
            );
        }
        println!(
            "  O_Nd prior {:.2} -> posterior {:.2}",
            normalized_mismatch(&prior, &obs)?.mean,
            normalized_mismatch(&post, &obs)?.mean
        );
    }
    Ok(())
}
