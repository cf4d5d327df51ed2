use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{DataElement, DataLayout, EnsembleMatrix, Observations, QuantityKind};
use crate::error::{DsiError, Result};
use crate::seeding::{standard_normals, Stream};

/// Linear-Gaussian data space: `d_h ~ N(mu, C)`, `d_f = A d_h`, observations
/// `d_obs = d_h + e`, `e ~ N(0, Ce)`, with the exact posterior of the full `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianCase {
    pub prior_mean_h: DVector<f64>,
    pub prior_cov_h: DMatrix<f64>,
    /// `A`, `N_f x N_h`.
    pub forecast_map: DMatrix<f64>,
    pub ce_diag: DVector<f64>,
    pub d_obs: DVector<f64>,
    pub posterior_mean: DVector<f64>,
    pub posterior_cov: DMatrix<f64>,
    layout: Arc<DataLayout>,
    chol_h: DMatrix<f64>,
}

impl LinearGaussianCase {
    pub fn new(
        prior_mean_h: DVector<f64>,
        prior_cov_h: DMatrix<f64>,
        forecast_map: DMatrix<f64>,
        ce_diag: DVector<f64>,
        d_obs: DVector<f64>,
    ) -> Result<Self> {
        let nh = prior_mean_h.len();
        let nf = forecast_map.nrows();
        if prior_cov_h.shape() != (nh, nh) {
            return Err(DsiError::mismatch("prior covariance size", nh, prior_cov_h.nrows()));
        }
        if forecast_map.ncols() != nh && nf > 0 {
            return Err(DsiError::mismatch("forecast map columns", nh, forecast_map.ncols()));
        }
        if ce_diag.len() != nh || d_obs.len() != nh {
            return Err(DsiError::mismatch("observation length", nh, d_obs.len()));
        }
        if (&prior_cov_h - prior_cov_h.transpose()).amax() > 1e-12 * prior_cov_h.amax().max(1.0) {
            return Err(DsiError::InvalidInput("prior covariance is not symmetric".into()));
        }
        let chol_h = prior_cov_h
            .clone()
            .cholesky()
            .ok_or_else(|| DsiError::InvalidInput("prior covariance is not positive definite".into()))?
            .l();
        if ce_diag.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(DsiError::InvalidInput("Ce must be positive definite".into()));
        }

        let prior_mean = stack_mean(&prior_mean_h, &forecast_map);
        let prior_cov = stack_cov(&prior_cov_h, &forecast_map);
        // K = Sigma H^T (H Sigma H^T + Ce)^{-1} with H selecting the history block
        let s_ht = prior_cov.columns(0, nh).into_owned();
        let innov_cov = &prior_cov_h + DMatrix::from_diagonal(&ce_diag);
        let chol = innov_cov
            .cholesky()
            .ok_or_else(|| DsiError::Numerical("innovation covariance is not positive definite".into()))?;
        let gain = chol.solve(&s_ht.transpose()).transpose();
        let posterior_mean = &prior_mean + &gain * (&d_obs - &prior_mean_h);
        let mut posterior_cov = &prior_cov - &gain * s_ht.transpose();
        posterior_cov = (&posterior_cov + posterior_cov.transpose()) * 0.5;

        let elements = (0..nh + nf)
            .map(|i| {
                let is_history = i < nh;
                DataElement {
                    id: if is_history { format!("h{i:03}") } else { format!("f{:03}", i - nh) },
                    well_id: "W1".into(),
                    x: 0.0,
                    y: 0.0,
                    time: 30.0 * (i + 1) as f64,
                    kind: QuantityKind::Other,
                    is_history,
                    noise_std: if is_history { ce_diag[i].sqrt() } else { 0.0 },
                }
            })
            .collect();
        let layout = Arc::new(DataLayout::new(elements)?);
        Ok(Self {
            prior_mean_h,
            prior_cov_h,
            forecast_map,
            ce_diag,
            d_obs,
            posterior_mean,
            posterior_cov,
            layout,
            chol_h,
        })
    }

    pub fn layout(&self) -> &Arc<DataLayout> {
        &self.layout
    }

    pub fn n_history(&self) -> usize {
        self.prior_mean_h.len()
    }

    pub fn prior_mean(&self) -> DVector<f64> {
        stack_mean(&self.prior_mean_h, &self.forecast_map)
    }

    pub fn prior_cov(&self) -> DMatrix<f64> {
        stack_cov(&self.prior_cov_h, &self.forecast_map)
    }

    pub fn observations(&self) -> Result<Observations> {
        Observations::new(self.d_obs.clone(), self.ce_diag.map(f64::sqrt))
    }

    /// Prior ensemble of `n_members` exact draws of `[d_h; A d_h]`.
    pub fn sample_prior(&self, n_members: usize, seed: u64) -> Result<EnsembleMatrix> {
        let nh = self.n_history();
        let nd = self.layout.len();
        let mut data = DMatrix::zeros(nd, n_members);
        for j in 0..n_members {
            let z = DVector::from_vec(standard_normals(seed, Stream::TestbedPrior, &[j as u64], nh));
            let dh = &self.prior_mean_h + &self.chol_h * z;
            let df = &self.forecast_map * &dh;
            data.view_mut((0, j), (nh, 1)).copy_from(&dh);
            data.view_mut((nh, j), (nd - nh, 1)).copy_from(&df);
        }
        EnsembleMatrix::new(data, Arc::clone(&self.layout))
    }
}

fn stack_mean(mean_h: &DVector<f64>, map: &DMatrix<f64>) -> DVector<f64> {
    let nh = mean_h.len();
    let mut out = DVector::zeros(nh + map.nrows());
    out.rows_mut(0, nh).copy_from(mean_h);
    if map.nrows() > 0 {
        out.rows_mut(nh, map.nrows()).copy_from(&(map * mean_h));
    }
    out
}

fn stack_cov(cov_h: &DMatrix<f64>, map: &DMatrix<f64>) -> DMatrix<f64> {
    let (nh, nf) = (cov_h.nrows(), map.nrows());
    let mut out = DMatrix::zeros(nh + nf, nh + nf);
    out.view_mut((0, 0), (nh, nh)).copy_from(cov_h);
    if nf > 0 {
        let cross = map * cov_h;
        out.view_mut((nh, 0), (nf, nh)).copy_from(&cross);
        out.view_mut((0, nh), (nh, nf)).copy_from(&cross.transpose());
        out.view_mut((nh, nh), (nf, nf)).copy_from(&(&cross * map.transpose()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearDims {
    pub n_history: usize,
    pub n_forecast: usize,
    pub n_members: usize,
}

/// Standard test problem: prior mean around 10, exponential correlation with
/// unit variance, forecasts as smooth positive combinations of the history,
/// `Ce = 0.25 I`, observations drawn from the prior predictive.
pub fn build_linear_case(dims: LinearDims, seed: u64) -> Result<(EnsembleMatrix, Observations, LinearGaussianCase)> {
    let LinearDims {
        n_history: nh,
        n_forecast: nf,
        n_members,
    } = dims;
    if nh == 0 || nh > 100 || nf > 200 {
        return Err(DsiError::Config(format!(
            "linear case dimensions must satisfy 1 <= history <= 100 and forecast <= 200, got {nh}/{nf}"
        )));
    }
    let mean_h = DVector::from_fn(nh, |i, _| 10.0 + 0.1 * i as f64);
    let cov_h = DMatrix::from_fn(nh, nh, |i, j| (-((i as f64) - (j as f64)).abs() / 5.0).exp());
    let map = DMatrix::from_fn(nf, nh, |k, i| {
        let centre = (k as f64 + 0.5) * nh as f64 / nf.max(1) as f64;
        (-((i as f64 - centre) / 3.0).powi(2)).exp()
    });
    let map = normalize_rows(map, nf);
    let ce_diag = DVector::from_element(nh, 0.25);

    let chol = cov_h.clone().cholesky().expect("exponential kernel is SPD").l();
    let truth = &mean_h + &chol * DVector::from_vec(standard_normals(seed, Stream::TestbedTruth, &[], nh));
    let noise = DVector::from_vec(standard_normals(seed, Stream::TestbedNoise, &[], nh)) * 0.5;
    let d_obs = truth + noise;

    let case = LinearGaussianCase::new(mean_h, cov_h, map, ce_diag, d_obs)?;
    let prior = case.sample_prior(n_members, seed)?;
    let obs = case.observations()?;
    Ok((prior, obs, case))
}

/// Rows scaled to sum to `1 + 0.5 k / n_f`, so forecasts drift upwards.
fn normalize_rows(mut m: DMatrix<f64>, nf: usize) -> DMatrix<f64> {
    for (k, mut row) in m.row_iter_mut().enumerate() {
        let s: f64 = row.sum();
        row *= (1.0 + 0.5 * k as f64 / nf.max(1) as f64) / s;
    }
    m
}
