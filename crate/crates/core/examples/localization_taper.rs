//! Gaspari-Cohn taper values and a space-time localization matrix for a
//! small well pattern with an anisotropic, rotated footprint.
//!
//! `cargo run --release --example localization_taper`

use dsi::testbed::build_decline_case;
use dsi::{build_localization, composite_ratio, gaspari_cohn, LocalizationSpec};

fn main() -> dsi::Result<()> {
    println!("  h/L   rho");
    for k in 0..=9 {
        let r = 0.25 * k as f64;
        println!("  {r:.2}  {:.4}", gaspari_cohn(r)?);
    }

    let case = build_decline_case(4, 20, 6, 0.1, 1)?;
    let layout = case.layout();
    let spec = LocalizationSpec::new(1500.0, 800.0, 360.0, 30f64.to_radians())?;
    let rho = build_localization(layout, &spec)?;
    let (nd, nh) = rho.shape();
    println!("\nlocalization matrix {nd} x {nh}");

    // taper between the first history datum and every history element at the same time
    let anchor = layout.history_indices()[0];
    let a = layout.element(anchor);
    for (col, &i) in layout.history_indices().iter().enumerate() {
        let b = layout.element(i);
        if b.time == a.time {
            println!(
                "  {:>10} -> {:>10}  ratio {:.3}  rho {:.3}",
                a.id,
                b.id,
                composite_ratio(a, b, &spec),
                rho.values()[(anchor, col)]
            );
        }
    }
    Ok(())
}
