//! Reading the normalized data mismatch: members one, two and three noise
//! standard deviations off give 0.5, 2 and 4.5.
//!
//! `cargo run --release --example mismatch_calibration`

use std::sync::Arc;

use dsi::diagnostics::normalized_mismatch;
use dsi::{DataElement, DataLayout, EnsembleMatrix, Observations, QuantityKind};
use nalgebra::{DMatrix, DVector};

fn main() -> dsi::Result<()> {
    let sigma = 2.0;
    let elements = (0..6)
        .map(|k| DataElement {
            id: format!("W_{k}"),
            well_id: "W".into(),
            x: 0.0,
            y: 0.0,
            time: 30.0 * (k + 1) as f64,
            kind: QuantityKind::OilRate,
            is_history: true,
            noise_std: sigma,
        })
        .collect();
    let layout = Arc::new(DataLayout::new(elements)?);
    let obs = Observations::from_layout(&layout, DVector::from_element(6, 100.0))?;
    let members = DMatrix::from_fn(6, 4, |i, j| 100.0 + if i % 2 == 0 { 1.0 } else { -1.0 } * j as f64 * sigma);
    let ens = EnsembleMatrix::new(members, layout)?;

    let report = normalized_mismatch(&ens, &obs)?;
    for (j, m) in report.per_member.iter().enumerate() {
        println!("member offset {j} sigma: O_Nd = {m}");
    }
    Ok(())
}
