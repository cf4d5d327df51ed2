//! Ensemble smoother with multiple data assimilation applied directly to the
//! predicted-data vectors.
//!
//! Each step updates every member with
//! `d_j <- d_j + (R o K)(d_obs + sqrt(alpha) e_j - d_{h,j})`, where
//! `K = dD dD_h^T (dD_h dD_h^T + alpha Ce)^{-1}` is recomputed from the current
//! ensemble and the inverse is taken in the `Ce^{-1/2}`-scaled subspace.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{anomalies, EnsembleMatrix, Observations, QuantityKind, SubspaceInverse};
use crate::error::{DsiError, Result};
use crate::localization::{build_localization, LocalizationMatrix, LocalizationSpec};
use crate::seeding::{standard_normals, Stream};

const SCHEDULE_TOL: f64 = 1e-9;

/// Inflation coefficients `alpha_1..alpha_Na` with `sum 1/alpha_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdaSchedule {
    alphas: Vec<f64>,
}

impl MdaSchedule {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(DsiError::Config("alpha schedule is empty".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(DsiError::Config(format!("alpha coefficients must be positive, got {a}")));
        }
        let inv_sum: f64 = alphas.iter().map(|a| 1.0 / a).sum();
        if (inv_sum - 1.0).abs() > SCHEDULE_TOL {
            return Err(DsiError::InvalidSchedule(inv_sum));
        }
        Ok(Self { alphas })
    }

    /// `n` iterations with `alpha_k = n`.
    pub fn constant(n: usize) -> Result<Self> {
        Self::new(vec![n as f64; n])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

impl Default for MdaSchedule {
    fn default() -> Self {
        Self {
            alphas: vec![4.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsmdaConfig {
    pub schedule: MdaSchedule,
    /// Singular-value energy kept in the subspace inversion.
    pub energy_xi: f64,
    pub localization: LocalizationSpec,
    pub rng_seed: u64,
    /// Kinds clamped at zero after the last iteration.
    pub truncate_negative_kinds: BTreeSet<QuantityKind>,
    /// Update members on the rayon pool. Results do not depend on this flag.
    pub parallel: bool,
}

impl Default for EsmdaConfig {
    fn default() -> Self {
        Self {
            schedule: MdaSchedule::default(),
            energy_xi: 0.99,
            localization: LocalizationSpec::disabled(),
            rng_seed: 0,
            truncate_negative_kinds: BTreeSet::from([QuantityKind::WaterRate]),
            parallel: true,
        }
    }
}

impl EsmdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy_xi > 0.0 && self.energy_xi <= 1.0) {
            return Err(DsiError::Config(format!("svd.energy must be in (0, 1], got {}", self.energy_xi)));
        }
        // re-check in case the schedule was built field by field elsewhere
        MdaSchedule::new(self.schedule.alphas.clone())?;
        self.localization.validate()
    }
}

/// Source of the observation perturbations `e_j ~ N(0, Ce)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Drawn from a stream keyed by `(seed, iteration, member)`.
    Seeded { seed: u64, iteration: u64 },
    /// `e_j = 0` for every member.
    Zero,
}

impl Perturbation {
    fn draw(&self, member: usize, error_std: &DVector<f64>) -> DVector<f64> {
        match *self {
            Perturbation::Zero => DVector::zeros(error_std.len()),
            Perturbation::Seeded { seed, iteration } => {
                let z = standard_normals(seed, Stream::EsmdaNoise, &[iteration, member as u64], error_std.len());
                DVector::from_vec(z).component_mul(error_std)
            }
        }
    }
}

/// Settings of a single smoother update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub energy_xi: f64,
    pub perturbation: Perturbation,
    pub parallel: bool,
}

/// Modified Kalman gain `dD dD_h^T (dD_h dD_h^T + alpha Ce)^{-1}`, `N_d x N_{d,h}`.
pub fn kalman_gain(
    delta_d: &DMatrix<f64>,
    delta_dh: &DMatrix<f64>,
    ce_diag: &DVector<f64>,
    alpha: f64,
    xi: f64,
) -> Result<DMatrix<f64>> {
    if delta_d.ncols() != delta_dh.ncols() {
        return Err(DsiError::mismatch("anomaly member count", delta_d.ncols(), delta_dh.ncols()));
    }
    let inverse = SubspaceInverse::new(delta_dh, ce_diag, alpha, xi)?;
    let cross = delta_d * delta_dh.transpose();
    // the inverse is symmetric, so K^T = C^{-1} (dD_h dD^T)
    Ok(inverse.apply_matrix(&cross.transpose())?.transpose())
}

/// One smoother update of every member with inflation `alpha`.
pub fn esmda_step(
    ens: &EnsembleMatrix,
    obs: &Observations,
    alpha: f64,
    localization: &LocalizationMatrix,
    settings: &StepSettings,
) -> Result<EnsembleMatrix> {
    let layout = ens.layout();
    obs.check_layout(layout)?;
    let (nd, nh) = (ens.n_data(), layout.n_history());
    if localization.shape() != (nd, nh) {
        return Err(DsiError::mismatch(
            "localization matrix size (rows x cols)",
            nd * nh,
            localization.shape().0 * localization.shape().1,
        ));
    }
    let delta_d = anomalies(ens.data())?;
    let delta_dh = delta_d.select_rows(layout.history_indices());
    let gain = kalman_gain(&delta_d, &delta_dh, &obs.ce_diag(), alpha, settings.energy_xi)?;
    let gain = localization.values().component_mul(&gain);

    let sqrt_alpha = alpha.sqrt();
    let hist = layout.history_indices();
    // innovations d_obs + sqrt(alpha) e_j - d_h,j, one column per member
    let innovation = |j: usize| -> DVector<f64> {
        let member = ens.data().column(j);
        let e = settings.perturbation.draw(j, obs.error_std());
        let mut v = obs.values() + e * sqrt_alpha;
        for (k, &row) in hist.iter().enumerate() {
            v[k] -= member[row];
        }
        v
    };
    let ne = ens.n_members();
    let columns: Vec<DVector<f64>> = if settings.parallel {
        (0..ne).into_par_iter().map(innovation).collect()
    } else {
        (0..ne).map(innovation).collect()
    };
    let innovations = DMatrix::from_columns(&columns);
    ens.with_data(ens.data() + gain * innovations)
}

/// Full DSI-ESMDA: `N_a` smoother steps, then the non-negativity clamp for
/// the configured kinds.
pub fn run_dsi_esmda(prior: &EnsembleMatrix, obs: &Observations, cfg: &EsmdaConfig) -> Result<EnsembleMatrix> {
    cfg.validate()?;
    let localization = build_localization(prior.layout(), &cfg.localization)?;
    let mut ens = prior.clone();
    for (k, &alpha) in cfg.schedule.alphas().iter().enumerate() {
        let settings = StepSettings {
            energy_xi: cfg.energy_xi,
            perturbation: Perturbation::Seeded {
                seed: cfg.rng_seed,
                iteration: k as u64,
            },
            parallel: cfg.parallel,
        };
        ens = esmda_step(&ens, obs, alpha, &localization, &settings)?;
    }
    truncate_negative(&ens, &cfg.truncate_negative_kinds)
}

/// Replaces negative values by zero on rows whose kind is in `kinds`.
pub fn truncate_negative(ens: &EnsembleMatrix, kinds: &BTreeSet<QuantityKind>) -> Result<EnsembleMatrix> {
    let mut data = ens.data().clone();
    for (i, e) in ens.layout().elements().iter().enumerate() {
        if kinds.contains(&e.kind) {
            for v in data.row_mut(i).iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    ens.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{DataElement, DataLayout};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn layout_with(kinds: &[(QuantityKind, bool)]) -> Arc<DataLayout> {
        let els = kinds
            .iter()
            .enumerate()
            .map(|(i, (k, h))| DataElement {
                id: format!("e{i}"),
                well_id: "P1".into(),
                x: 0.0,
                y: 0.0,
                time: 30.0 * i as f64,
                kind: *k,
                is_history: *h,
                noise_std: 1.0,
            })
            .collect();
        Arc::new(DataLayout::new(els).unwrap())
    }

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn schedule_rules() {
        assert_eq!(MdaSchedule::default().alphas(), &[4.0; 4]);
        assert!(MdaSchedule::new(vec![9.333, 7.0, 4.0, 2.0]).is_err());
        let s = MdaSchedule::new(vec![3.0, 3.0, 3.0]).unwrap();
        assert_eq!(s.len(), 3);
        let err = MdaSchedule::new(vec![2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("alpha schedule does not sum to one"));
        assert!(MdaSchedule::new(vec![]).is_err());
        assert!(MdaSchedule::new(vec![-1.0, 0.5]).is_err());
        assert_eq!(MdaSchedule::constant(1).unwrap().alphas(), &[1.0]);
    }

    #[test]
    fn gain_examples() {
        let k = kalman_gain(&DMatrix::zeros(3, 4), &DMatrix::zeros(2, 4), &DVector::from_element(2, 1.0), 1.0, 0.99).unwrap();
        assert_eq!(k, DMatrix::zeros(3, 2));
        let two = DMatrix::from_element(1, 1, 2.0);
        let k = kalman_gain(&two, &two, &DVector::from_element(1, 1.0), 1.0, 1.0).unwrap();
        assert_relative_eq!(k[(0, 0)], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn gain_matches_dense_formula() {
        let dd = random(7, 12, 5);
        let dh = dd.rows(0, 4).into_owned();
        let ce = DVector::from_vec(vec![0.2, 0.5, 1.0, 0.7]);
        let alpha = 2.5;
        let k = kalman_gain(&dd, &dh, &ce, alpha, 1.0).unwrap();
        let c = &dh * dh.transpose() + DMatrix::from_diagonal(&ce) * alpha;
        let dense = &dd * dh.transpose() * c.try_inverse().unwrap();
        assert!((&k - &dense).norm() <= 1e-8 * dense.norm());
    }

    #[test]
    fn zero_innovation_leaves_ensemble() {
        let layout = layout_with(&[(QuantityKind::OilRate, true), (QuantityKind::OilRate, true), (QuantityKind::OilRate, false)]);
        let data = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 5.0, 6.0, 7.0]);
        let ens = EnsembleMatrix::new(data.clone(), layout.clone()).unwrap();
        let obs = Observations::from_layout(&layout, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let settings = StepSettings {
            energy_xi: 0.99,
            perturbation: Perturbation::Zero,
            parallel: false,
        };
        let out = esmda_step(&ens, &obs, 1.0, &LocalizationMatrix::ones(3, 2), &settings).unwrap();
        assert_eq!(out.data(), &data);
    }

    #[test]
    fn ones_localization_is_bit_identical_to_disabled() {
        let layout = layout_with(&[(QuantityKind::OilRate, true), (QuantityKind::OilRate, true), (QuantityKind::WaterRate, false)]);
        let ens = EnsembleMatrix::new(random(3, 15, 9), layout.clone()).unwrap();
        let obs = Observations::from_layout(&layout, DVector::from_vec(vec![0.3, -0.2])).unwrap();
        let settings = StepSettings {
            energy_xi: 0.99,
            perturbation: Perturbation::Seeded { seed: 3, iteration: 0 },
            parallel: true,
        };
        let disabled = build_localization(&layout, &LocalizationSpec::disabled()).unwrap();
        let a = esmda_step(&ens, &obs, 2.0, &disabled, &settings).unwrap();
        let b = esmda_step(&ens, &obs, 2.0, &LocalizationMatrix::ones(3, 2), &settings).unwrap();
        assert_eq!(a.data(), b.data());
        let serial = esmda_step(&ens, &obs, 2.0, &disabled, &StepSettings { parallel: false, ..settings }).unwrap();
        assert_eq!(a.data(), serial.data());
    }

    #[test]
    fn clamps_only_configured_kinds_after_last_step() {
        let layout = layout_with(&[(QuantityKind::WaterRate, false), (QuantityKind::Pressure, false)]);
        let ens = EnsembleMatrix::new(DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, -2.0, 4.0]), layout).unwrap();
        let out = truncate_negative(&ens, &BTreeSet::from([QuantityKind::WaterRate])).unwrap();
        assert_eq!(out.data(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 4.0]));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let layout = layout_with(&[(QuantityKind::OilRate, true), (QuantityKind::OilRate, false)]);
        let ens = EnsembleMatrix::new(random(2, 4, 1), layout).unwrap();
        let obs = Observations::new(DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let s = StepSettings { energy_xi: 1.0, perturbation: Perturbation::Zero, parallel: false };
        assert!(esmda_step(&ens, &obs, 1.0, &LocalizationMatrix::ones(2, 1), &s).is_err());
        let obs = Observations::new(DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])).unwrap();
        assert!(esmda_step(&ens, &obs, 1.0, &LocalizationMatrix::ones(2, 2), &s).is_err());
    }

    /// prior d_h ~ N(0,1), d_f = 2 d_h, Ce = 1, d_obs = 1: posterior
    /// d_h ~ N(0.5, 0.5), d_f ~ N(1, 2).
    #[test]
    fn scalar_linear_gaussian_single_step() {
        let layout = layout_with(&[(QuantityKind::Other, true), (QuantityKind::Other, false)]);
        let ne = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut data = DMatrix::zeros(2, ne);
        for j in 0..ne {
            let h: f64 = rng.sample(StandardNormal);
            data[(0, j)] = h;
            data[(1, j)] = 2.0 * h;
        }
        let prior = EnsembleMatrix::new(data, layout.clone()).unwrap();
        let obs = Observations::from_layout(&layout, DVector::from_element(1, 1.0)).unwrap();
        for na in [1usize, 4] {
            let cfg = EsmdaConfig {
                schedule: MdaSchedule::constant(na).unwrap(),
                energy_xi: 1.0,
                rng_seed: 7,
                truncate_negative_kinds: BTreeSet::new(),
                ..Default::default()
            };
            let post = run_dsi_esmda(&prior, &obs, &cfg).unwrap();
            let mean = post.mean();
            let dd = anomalies(post.data()).unwrap();
            let var = (&dd * dd.transpose()).diagonal();
            assert_relative_eq!(mean[0], 0.5, max_relative = 0.03);
            assert_relative_eq!(var[0], 0.5, max_relative = 0.03);
            assert_relative_eq!(mean[1], 1.0, max_relative = 0.03);
            assert_relative_eq!(var[1], 2.0, max_relative = 0.03);
        }
    }
}
