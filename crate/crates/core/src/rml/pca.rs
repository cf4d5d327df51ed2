use nalgebra::{DMatrix, DVector};

use crate::ensemble::{anomalies, truncated_svd_energy, EnsembleMatrix};
use crate::error::{DsiError, Result};

/// `d_pca = mean + C_d^{1/2} x` with `C_d^{1/2} = S U_r Sigma_r`, where `S` is
/// either the identity or a diagonal rescaling (`Ce^{1/2}`) applied before the
/// SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    singular_values: DVector<f64>,
    scale: Option<DVector<f64>>,
    half_cov: DMatrix<f64>,
    history_rows: Vec<usize>,
    mean_h: DVector<f64>,
    half_cov_h: DMatrix<f64>,
}

/// Fits the PCA parameterization to a prior ensemble.
///
/// With `rescale_std = Some(s)` the SVD is taken of `diag(s)^{-1} dD` and the
/// square root is mapped back with `diag(s)`; `s` has one positive entry per
/// element of `d`.
pub fn fit_pca(prior: &EnsembleMatrix, xi: f64, rescale_std: Option<&DVector<f64>>) -> Result<PcaModel> {
    let mut delta = anomalies(prior.data())?;
    if let Some(s) = rescale_std {
        if s.len() != prior.n_data() {
            return Err(DsiError::mismatch("PCA rescaling vector", prior.n_data(), s.len()));
        }
        if let Some(v) = s.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(DsiError::InvalidInput(format!("PCA rescaling entries must be positive, got {v}")));
        }
        for (mut row, sv) in delta.row_iter_mut().zip(s.iter()) {
            row /= *sv;
        }
    }
    let svd = truncated_svd_energy(&delta, xi)?;
    let mut half_cov = svd.scaled_left();
    if let Some(s) = rescale_std {
        for (mut row, sv) in half_cov.row_iter_mut().zip(s.iter()) {
            row *= *sv;
        }
    }
    let mean = prior.mean();
    let history_rows = prior.layout().history_indices().to_vec();
    let mean_h = mean.select_rows(&history_rows);
    let half_cov_h = half_cov.select_rows(&history_rows);
    Ok(PcaModel {
        mean,
        basis: svd.left_vectors,
        singular_values: svd.singular_values,
        scale: rescale_std.cloned(),
        half_cov,
        history_rows,
        mean_h,
        half_cov_h,
    })
}

impl PcaModel {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn half_cov(&self) -> &DMatrix<f64> {
        &self.half_cov
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn history_rows(&self) -> &[usize] {
        &self.history_rows
    }

    pub fn mean_h(&self) -> &DVector<f64> {
        &self.mean_h
    }

    /// Rows of the square root belonging to history elements.
    pub fn half_cov_h(&self) -> &DMatrix<f64> {
        &self.half_cov_h
    }

    /// Full predicted-data vector for coefficients `x`.
    pub fn predict(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.half_cov * x
    }

    pub fn predict_history(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mean_h + &self.half_cov_h * x
    }

    /// Least-squares coefficients of `d` (pseudo-inverse of the square root).
    pub fn coefficients(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        if d.len() != self.mean.len() {
            return Err(DsiError::mismatch("PCA coefficient input", self.mean.len(), d.len()));
        }
        let mut centred = d - &self.mean;
        if let Some(s) = &self.scale {
            centred.component_div_assign(s);
        }
        Ok(self.basis.tr_mul(&centred).component_div(&self.singular_values))
    }
}
