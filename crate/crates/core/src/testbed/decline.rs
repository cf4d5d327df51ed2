use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{DataElement, DataLayout, EnsembleMatrix, Observations, QuantityKind};
use crate::error::{DsiError, Result};
use crate::seeding::{standard_normals, Stream};

/// Days per monthly report.
pub const MONTH_DAYS: f64 = 30.0;

/// Response parameters of one producer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellParams {
    /// Initial oil rate (m3/day).
    pub q0: f64,
    /// Exponential decline constant (1/day).
    pub decline: f64,
    /// Water breakthrough time (days), the logistic mid-point.
    pub t_bt: f64,
    /// Logistic steepness (1/day).
    pub steepness: f64,
    /// Plateau water cut, below 1.
    pub wmax: f64,
}

impl WellParams {
    /// `q0 exp(-a t)`.
    pub fn oil_rate(&self, t: f64) -> f64 {
        self.q0 * (-self.decline * t).exp()
    }

    /// `wmax / (1 + exp(-b (t - t_bt)))`.
    pub fn water_cut(&self, t: f64) -> f64 {
        self.wmax / (1.0 + (-self.steepness * (t - self.t_bt)).exp())
    }

    /// Water rate implied by the oil rate and water cut, `q_o w / (1 - w)`.
    pub fn water_rate(&self, t: f64) -> f64 {
        let w = self.water_cut(t);
        self.oil_rate(t) * w / (1.0 - w)
    }
}

/// Log-normal priors (median, log-std) for each parameter and a logistic
/// prior for the plateau water cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclinePrior {
    pub q0: (f64, f64),
    pub decline: (f64, f64),
    pub t_bt: (f64, f64),
    pub steepness: (f64, f64),
    /// `wmax = 0.9 * sigmoid(loc + scale z)`.
    pub wmax_logit: (f64, f64),
}

impl Default for DeclinePrior {
    fn default() -> Self {
        Self {
            q0: (800.0, 0.25),
            decline: (1.0 / 1500.0, 0.3),
            t_bt: (420.0, 0.3),
            steepness: (0.012, 0.2),
            wmax_logit: (1.0, 0.6),
        }
    }
}

impl DeclinePrior {
    /// Parameters at standard-normal scores `z = [z_q0, z_a, z_tbt, z_b, z_w]`.
    pub fn params(&self, z: &[f64]) -> WellParams {
        let ln = |(median, s): (f64, f64), z: f64| median * (s * z).exp();
        let logit = self.wmax_logit.0 + self.wmax_logit.1 * z[4];
        WellParams {
            q0: ln(self.q0, z[0]),
            decline: ln(self.decline, z[1]),
            t_bt: ln(self.t_bt, z[2]),
            steepness: ln(self.steepness, z[3]),
            wmax: 0.9 / (1.0 + (-logit).exp()),
        }
    }
}

/// How the hidden reference is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceDraw {
    /// An ordinary draw from the prior.
    FromPrior,
    /// Every parameter of every well at the prior quantile with score `z`,
    /// signed so that both oil and water rates are pushed upwards (high `q0`,
    /// slow decline, early breakthrough, steep rise, high plateau).
    Biased { z: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeclineSpec {
    pub n_wells: usize,
    pub n_members: usize,
    /// Monthly reports in the whole series.
    pub n_steps: usize,
    /// Reports belonging to the history period, `1 <= cut < n_steps`.
    pub history_cut: usize,
    /// Observation std as a fraction of the reference value.
    pub noise_frac: f64,
    /// Distance between neighbouring wells on a square grid (m).
    pub well_spacing: f64,
    pub prior: DeclinePrior,
    pub reference: ReferenceDraw,
    pub seed: u64,
}

impl Default for DeclineSpec {
    fn default() -> Self {
        Self {
            n_wells: 4,
            n_members: 200,
            n_steps: 36,
            history_cut: 18,
            noise_frac: 0.1,
            well_spacing: 1000.0,
            prior: DeclinePrior::default(),
            reference: ReferenceDraw::FromPrior,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeclineCase {
    pub prior: EnsembleMatrix,
    pub observations: Observations,
    /// Noise-free response of the hidden reference, one value per element.
    pub reference: DVector<f64>,
    pub reference_params: Vec<WellParams>,
}

impl DeclineCase {
    pub fn layout(&self) -> &Arc<DataLayout> {
        self.prior.layout()
    }
}

/// Builds a case from the default prior with the reference drawn from it.
pub fn build_decline_case(
    n_wells: usize,
    n_members: usize,
    history_cut: usize,
    noise_frac: f64,
    rng_seed: u64,
) -> Result<DeclineCase> {
    build_decline_case_with(&DeclineSpec {
        n_wells,
        n_members,
        history_cut,
        noise_frac,
        seed: rng_seed,
        n_steps: (2 * history_cut).max(history_cut + 1),
        ..DeclineSpec::default()
    })
}

pub fn build_decline_case_with(spec: &DeclineSpec) -> Result<DeclineCase> {
    if spec.n_wells == 0 {
        return Err(DsiError::Config("decline case needs at least one well".into()));
    }
    if spec.history_cut == 0 || spec.history_cut >= spec.n_steps {
        return Err(DsiError::Config(format!(
            "history cut {} must lie strictly inside the {}-step time grid",
            spec.history_cut, spec.n_steps
        )));
    }
    if !(spec.noise_frac >= 0.0 && spec.noise_frac.is_finite()) {
        return Err(DsiError::Config(format!("noise fraction must be non-negative, got {}", spec.noise_frac)));
    }
    let coords = well_coordinates(spec.n_wells, spec.well_spacing);
    let times: Vec<f64> = (1..=spec.n_steps).map(|k| k as f64 * MONTH_DAYS).collect();

    let reference_params: Vec<WellParams> = (0..spec.n_wells)
        .map(|w| match spec.reference {
            ReferenceDraw::FromPrior => {
                spec.prior.params(&standard_normals(spec.seed, Stream::TestbedTruth, &[w as u64], 5))
            }
            ReferenceDraw::Biased { z } => spec.prior.params(&[z, -z, -z, z, z]),
        })
        .collect();
    let reference = DVector::from_vec(simulate(&reference_params, &times));

    // noise floor keeps zero-valued data observable
    let max_abs = reference.amax();
    let sigma_min = 1e-6 * max_abs.max(f64::MIN_POSITIVE);
    let noise_std: Vec<f64> = reference.iter().map(|v| (spec.noise_frac * v.abs()).max(sigma_min)).collect();

    let mut elements = Vec::with_capacity(reference.len());
    let mut idx = 0;
    for (w, &(x, y)) in coords.iter().enumerate() {
        for kind in [QuantityKind::OilRate, QuantityKind::WaterRate] {
            for (k, &t) in times.iter().enumerate() {
                elements.push(DataElement {
                    id: format!("P{}_{}_{:03}", w + 1, short(kind), k + 1),
                    well_id: format!("P{}", w + 1),
                    x,
                    y,
                    time: t,
                    kind,
                    is_history: k < spec.history_cut,
                    noise_std: noise_std[idx],
                });
                idx += 1;
            }
        }
    }
    let layout = Arc::new(DataLayout::new(elements)?);

    let hist = layout.history_indices();
    let eps = standard_normals(spec.seed, Stream::TestbedNoise, &[], hist.len());
    let obs_values = DVector::from_fn(hist.len(), |k, _| reference[hist[k]] + noise_std[hist[k]] * eps[k]);
    let observations = Observations::new(obs_values, DVector::from_fn(hist.len(), |k, _| noise_std[hist[k]]))?;

    let columns: Vec<DVector<f64>> = (0..spec.n_members)
        .map(|j| {
            let params: Vec<WellParams> = (0..spec.n_wells)
                .map(|w| spec.prior.params(&standard_normals(spec.seed, Stream::TestbedPrior, &[j as u64, w as u64], 5)))
                .collect();
            DVector::from_vec(simulate(&params, &times))
        })
        .collect();
    let prior = EnsembleMatrix::new(DMatrix::from_columns(&columns), layout)?;
    Ok(DeclineCase {
        prior,
        observations,
        reference,
        reference_params,
    })
}

fn short(kind: QuantityKind) -> &'static str {
    match kind {
        QuantityKind::OilRate => "OIL",
        QuantityKind::WaterRate => "WAT",
        QuantityKind::InjectionRate => "INJ",
        QuantityKind::Pressure => "PRS",
        QuantityKind::Other => "OTH",
    }
}

/// Wells on a square grid, row by row.
fn well_coordinates(n: usize, spacing: f64) -> Vec<(f64, f64)> {
    let side = (n as f64).sqrt().ceil() as usize;
    (0..n).map(|w| ((w % side) as f64 * spacing, (w / side) as f64 * spacing)).collect()
}

/// Data vector ordered well, then kind (oil, water), then time.
fn simulate(params: &[WellParams], times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len() * 2 * times.len());
    for p in params {
        out.extend(times.iter().map(|&t| p.oil_rate(t)));
        out.extend(times.iter().map(|&t| p.water_rate(t)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::coverage;

    #[test]
    fn rates_non_negative_and_cut_bounded() {
        let prior = DeclinePrior::default();
        for seed in 0..200u64 {
            let p = prior.params(&standard_normals(seed, Stream::TestbedPrior, &[], 5));
            for k in 0..60 {
                let t = k as f64 * MONTH_DAYS;
                assert!(p.oil_rate(t) >= 0.0 && p.water_rate(t) >= 0.0);
                let w = p.water_cut(t);
                assert!((0.0..=p.wmax).contains(&w));
            }
            assert!(p.t_bt > 0.0);
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let a = build_decline_case(3, 20, 10, 0.1, 4).unwrap();
        let b = build_decline_case(3, 20, 10, 0.1, 4).unwrap();
        assert_eq!(a.prior, b.prior);
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.reference, b.reference);
        let c = build_decline_case(3, 20, 10, 0.1, 5).unwrap();
        assert_ne!(a.prior, c.prior);
    }

    #[test]
    fn layout_shape() {
        let case = build_decline_case(3, 10, 12, 0.1, 1).unwrap();
        let layout = case.layout();
        assert_eq!(layout.len(), 3 * 2 * 24);
        assert_eq!(layout.n_history(), 3 * 2 * 12);
        assert_eq!(case.observations.len(), layout.n_history());
        assert!(layout.elements().iter().all(|e| e.time > 0.0));
    }

    #[test]
    fn zero_noise_uses_floor() {
        let case = build_decline_case(2, 5, 6, 0.0, 1).unwrap();
        let floor = 1e-6 * case.reference.amax();
        assert!(case.observations.error_std().iter().all(|s| (*s - floor).abs() < 1e-15 * floor.max(1.0)));
    }

    #[test]
    fn rejects_bad_cut() {
        let spec = DeclineSpec {
            history_cut: 36,
            ..DeclineSpec::default()
        };
        assert!(build_decline_case_with(&spec).is_err());
        assert!(build_decline_case(2, 5, 0, 0.1, 1).is_err());
    }

    /// Monte-Carlo oracle: a reference drawn from the prior sits inside the
    /// prior P10-P90 band most of the time; a biased one mostly does not.
    #[test]
    fn prior_band_coverage() {
        let mut unbiased = 0.0;
        let mut biased = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let spec = DeclineSpec {
                n_members: 200,
                seed,
                ..DeclineSpec::default()
            };
            let case = build_decline_case_with(&spec).unwrap();
            unbiased += coverage(&case.prior, &case.reference, 0.1, 0.9).unwrap();
            let case = build_decline_case_with(&DeclineSpec {
                reference: ReferenceDraw::Biased { z: 2.326 },
                ..spec
            })
            .unwrap();
            biased += coverage(&case.prior, &case.reference, 0.1, 0.9).unwrap();
        }
        let (unbiased, biased) = (unbiased / seeds as f64, biased / seeds as f64);
        assert!(unbiased >= 0.7, "unbiased coverage {unbiased}");
        assert!(biased < 0.5, "biased coverage {biased}");
    }
}
