//! Gaspari-Cohn localization of the Kalman gain over a rotated, anisotropic
//! spatial distance combined with a temporal distance.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ensemble::{DataElement, DataLayout};
use crate::error::{DsiError, Result};

/// Critical lengths of the taper. With `enabled == false` the localization
/// matrix is all ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationSpec {
    /// Critical length along the rotated x' axis (m).
    pub lx: f64,
    /// Critical length along the rotated y' axis (m).
    pub ly: f64,
    /// Critical time difference (days).
    pub t: f64,
    /// Counterclockwise rotation applied to the well displacement (radians).
    pub theta: f64,
    pub enabled: bool,
}

impl LocalizationSpec {
    pub fn disabled() -> Self {
        Self {
            lx: 2000.0,
            ly: 2000.0,
            t: 6000.0,
            theta: 0.0,
            enabled: false,
        }
    }

    pub fn new(lx: f64, ly: f64, t: f64, theta: f64) -> Result<Self> {
        let spec = Self {
            lx,
            ly,
            t,
            theta,
            enabled: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        for (name, v) in [("lx", self.lx), ("ly", self.ly), ("t", self.t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DsiError::Config(format!("localization.{name} must be positive, got {v}")));
            }
        }
        if !self.theta.is_finite() {
            return Err(DsiError::Config("localization.theta must be finite".into()));
        }
        Ok(())
    }
}

impl Default for LocalizationSpec {
    fn default() -> Self {
        Self::disabled()
    }
}

/// Fifth-order piecewise rational correlation function of Gaspari and Cohn,
/// supported on `[0, 2]`.
pub fn gaspari_cohn(ratio: f64) -> Result<f64> {
    if ratio.is_nan() || ratio < 0.0 {
        return Err(DsiError::InvalidInput(format!("localization ratio must be non-negative, got {ratio}")));
    }
    Ok(gaspari_cohn_unchecked(ratio))
}

#[inline]
fn gaspari_cohn_unchecked(z: f64) -> f64 {
    if z <= 1.0 {
        // Horner form of -z^5/4 + z^4/2 + 5z^3/8 - 5z^2/3 + 1
        ((((-0.25 * z + 0.5) * z + 0.625) * z - 5.0 / 3.0) * z) * z + 1.0
    } else if z < 2.0 {
        // z^5/12 - z^4/2 + 5z^3/8 + 5z^2/3 - 5z + 4 - 2/(3z)
        let v = ((((z / 12.0 - 0.5) * z + 0.625) * z + 5.0 / 3.0) * z - 5.0) * z + 4.0 - 2.0 / (3.0 * z);
        // cancellation near z = 2 can leave a tiny negative residue
        v.max(0.0)
    } else {
        0.0
    }
}

/// Rotates a displacement counterclockwise by `theta`.
pub fn rotate(dx: f64, dy: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * dx - s * dy, s * dx + c * dy)
}

/// `h/L` between two data elements: rotated well displacement scaled by
/// `(lx, ly)` plus the time difference scaled by `t`.
pub fn composite_ratio(a: &DataElement, b: &DataElement, spec: &LocalizationSpec) -> f64 {
    let (dxr, dyr) = rotate(a.x - b.x, a.y - b.y, spec.theta);
    let dt = a.time - b.time;
    ((dxr / spec.lx).powi(2) + (dyr / spec.ly).powi(2) + (dt / spec.t).powi(2)).sqrt()
}

/// Schur-product taper with the shape of the Kalman gain, `N_d x N_{d,h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationMatrix {
    values: DMatrix<f64>,
}

impl LocalizationMatrix {
    pub fn ones(n_data: usize, n_history: usize) -> Self {
        Self {
            values: DMatrix::from_element(n_data, n_history, 1.0),
        }
    }

    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DsiError::InvalidInput("localization entries must lie in [0, 1]".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// `R[n, i] = gaspari_cohn(h/L)` between element `n` of `d` and history
/// element `i`.
pub fn build_localization(layout: &DataLayout, spec: &LocalizationSpec) -> Result<LocalizationMatrix> {
    let hist = layout.history_indices();
    if hist.is_empty() {
        return Err(DsiError::InvalidInput("layout has no history elements".into()));
    }
    if !spec.enabled {
        return Ok(LocalizationMatrix::ones(layout.len(), hist.len()));
    }
    spec.validate()?;
    let rows: Vec<Vec<f64>> = layout
        .elements()
        .par_iter()
        .map(|e| {
            hist.iter()
                .map(|&i| gaspari_cohn_unchecked(composite_ratio(e, layout.element(i), spec)))
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(layout.len(), hist.len(), |r, c| rows[r][c]);
    Ok(LocalizationMatrix { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::QuantityKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn el(id: &str, x: f64, y: f64, t: f64, hist: bool) -> DataElement {
        DataElement {
            id: id.into(),
            well_id: format!("W{x}_{y}"),
            x,
            y,
            time: t,
            kind: QuantityKind::OilRate,
            is_history: hist,
            noise_std: 1.0,
        }
    }

    #[test]
    fn taper_anchor_values() {
        assert_eq!(gaspari_cohn(0.0).unwrap(), 1.0);
        // -1/4 + 1/2 + 5/8 - 5/3 + 1 = 5/24
        assert_relative_eq!(gaspari_cohn(1.0).unwrap(), 5.0 / 24.0, epsilon = 1e-15);
        assert!((gaspari_cohn(1.0).unwrap() - 0.21).abs() < 0.002);
        assert_eq!(gaspari_cohn(2.0).unwrap(), 0.0);
        assert_eq!(gaspari_cohn(2.5).unwrap(), 0.0);
        assert!(gaspari_cohn(-0.1).is_err());
        assert!(gaspari_cohn(f64::NAN).is_err());
    }

    #[test]
    fn taper_continuous_and_non_increasing() {
        let second_branch_at_one = 1.0 / 12.0 - 0.5 + 0.625 + 5.0 / 3.0 - 5.0 + 4.0 - 2.0 / 3.0;
        assert!((gaspari_cohn(1.0).unwrap() - second_branch_at_one).abs() < 1e-12);
        let below_two = gaspari_cohn(2.0 - 1e-9).unwrap();
        assert!(below_two.abs() < 1e-12);
        let mut prev = 1.0;
        for k in 0..=20_000 {
            let z = 2.0 * k as f64 / 20_000.0;
            let v = gaspari_cohn(z).unwrap();
            assert!(v <= prev + 1e-15, "not monotone at {z}");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn ratio_examples() {
        let spec = LocalizationSpec::new(2000.0, 1000.0, 365.0, 0.0).unwrap();
        let a = el("a", 0.0, 0.0, 0.0, true);
        assert_relative_eq!(composite_ratio(&a, &el("b", 0.0, 0.0, 365.0, true), &spec), 1.0);
        assert_relative_eq!(composite_ratio(&a, &el("b", 2000.0, 0.0, 0.0, true), &spec), 1.0);
        assert_relative_eq!(composite_ratio(&a, &el("b", 0.0, 1000.0, 0.0, true), &spec), 1.0);
    }

    #[test]
    fn quarter_turn_maps_x_onto_y_prime() {
        let (xr, yr) = rotate(1.0, 0.0, FRAC_PI_2);
        assert!(xr.abs() < 1e-15);
        assert_relative_eq!(yr, 1.0);
        // with ly != lx the ratio picks up ly
        let spec = LocalizationSpec::new(10.0, 1.0, 1.0, FRAC_PI_2).unwrap();
        let r = composite_ratio(&el("a", 1.0, 0.0, 0.0, true), &el("b", 0.0, 0.0, 0.0, true), &spec);
        assert_relative_eq!(r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disabled_spec_gives_ones() {
        let layout = DataLayout::new(vec![el("a", 0.0, 0.0, 0.0, true), el("b", 9e9, 0.0, 1e6, false)]).unwrap();
        let r = build_localization(&layout, &LocalizationSpec::disabled()).unwrap();
        assert_eq!(r, LocalizationMatrix::ones(2, 1));
    }

    #[test]
    fn far_pairs_vanish_and_self_is_one() {
        let layout = DataLayout::new(vec![
            el("a", 0.0, 0.0, 0.0, true),
            el("b", 0.0, 0.0, 30.0, true),
            el("c", 5000.0, 0.0, 1000.0, false),
        ])
        .unwrap();
        let spec = LocalizationSpec::new(1000.0, 1000.0, 300.0, 0.3).unwrap();
        let r = build_localization(&layout, &spec).unwrap();
        assert_eq!(r.shape(), (3, 2));
        assert_eq!(r.values()[(0, 0)], 1.0);
        assert_eq!(r.values()[(1, 1)], 1.0);
        assert_eq!(r.values()[(2, 0)], 0.0);
        assert!(r.values()[(0, 1)] > 0.0 && r.values()[(0, 1)] < 1.0);
    }

    #[test]
    fn needs_history() {
        let layout = DataLayout::new(vec![el("a", 0.0, 0.0, 0.0, false)]).unwrap();
        assert!(build_localization(&layout, &LocalizationSpec::disabled()).is_err());
        assert!(LocalizationSpec::new(0.0, 1.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn ratio_symmetric_and_translation_invariant(
            ax in -5e3f64..5e3, ay in -5e3f64..5e3, bx in -5e3f64..5e3, by in -5e3f64..5e3,
            at in 0f64..3e3, bt in 0f64..3e3, ox in -1e4f64..1e4, oy in -1e4f64..1e4,
            lx in 10f64..5e3, ly in 10f64..5e3, t in 1f64..5e3, theta in -7f64..7.0,
        ) {
            let spec = LocalizationSpec::new(lx, ly, t, theta).unwrap();
            let a = el("a", ax, ay, at, true);
            let b = el("b", bx, by, bt, true);
            let ab = composite_ratio(&a, &b, &spec);
            prop_assert!((ab - composite_ratio(&b, &a, &spec)).abs() <= 1e-12 * (1.0 + ab));
            let a2 = el("a", ax + ox, ay + oy, at, true);
            let b2 = el("b", bx + ox, by + oy, bt, true);
            prop_assert!((ab - composite_ratio(&a2, &b2, &spec)).abs() <= 1e-9 * (1.0 + ab));
        }

        #[test]
        fn rotation_round_trip(dx in -1e3f64..1e3, dy in -1e3f64..1e3, theta in -7f64..7.0) {
            let (xr, yr) = rotate(dx, dy, theta);
            let (x0, y0) = rotate(xr, yr, -theta);
            prop_assert!((x0 - dx).abs() <= 1e-12 * (1.0 + dx.abs() + dy.abs()));
            prop_assert!((y0 - dy).abs() <= 1e-12 * (1.0 + dx.abs() + dy.abs()));
        }

        #[test]
        fn entries_bounded(coords in proptest::collection::vec((-3e3f64..3e3, -3e3f64..3e3, 0f64..2e3, any::<bool>()), 1..12)) {
            let mut els: Vec<DataElement> = coords.iter().enumerate()
                .map(|(i, (x, y, t, h))| el(&format!("e{i}"), *x, *y, *t, *h)).collect();
            els[0].is_history = true;
            let layout = DataLayout::new(els).unwrap();
            let spec = LocalizationSpec::new(800.0, 1500.0, 400.0, 0.7).unwrap();
            let r = build_localization(&layout, &spec).unwrap();
            prop_assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
