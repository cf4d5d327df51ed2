use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::layout::DataLayout;
use crate::error::{DsiError, Result};

/// `N_d x N_e` matrix of predicted-data realizations; column `j` is member `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMatrix {
    data: DMatrix<f64>,
    layout: Arc<DataLayout>,
}

impl EnsembleMatrix {
    pub fn new(data: DMatrix<f64>, layout: Arc<DataLayout>) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(DsiError::DegenerateEnsemble(format!(
                "need at least 2 members, got {}",
                data.ncols()
            )));
        }
        if data.nrows() != layout.len() {
            return Err(DsiError::mismatch("ensemble rows vs layout elements", layout.len(), data.nrows()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % data.nrows(), pos / data.nrows());
            return Err(DsiError::InvalidInput(format!(
                "non-finite value at element '{}', member {}",
                layout.element(r).id,
                c
            )));
        }
        Ok(Self { data, layout })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn layout(&self) -> &Arc<DataLayout> {
        &self.layout
    }

    pub fn n_members(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_data(&self) -> usize {
        self.data.nrows()
    }

    pub fn member(&self, j: usize) -> DVector<f64> {
        self.data.column(j).into_owned()
    }

    pub fn mean(&self) -> DVector<f64> {
        row_means(&self.data)
    }

    /// `N_{d,h} x N_e` block of history rows.
    pub fn history_block(&self) -> DMatrix<f64> {
        self.data.select_rows(self.layout.history_indices())
    }

    /// Same layout, new values.
    pub fn with_data(&self, data: DMatrix<f64>) -> Result<Self> {
        Self::new(data, Arc::clone(&self.layout))
    }

    /// Sub-ensemble over the given rows with the matching sub-layout.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let layout = Arc::new(self.layout.subset(rows)?);
        Self::new(self.data.select_rows(rows), layout)
    }

    pub fn forecast_part(&self) -> Result<Self> {
        self.select_rows(self.layout.forecast_indices())
    }
}

/// Observed history `d_obs` with the diagonal of `Ce^{1/2}`, both in layout
/// history order.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    values: DVector<f64>,
    error_std: DVector<f64>,
}

impl Observations {
    pub fn new(values: DVector<f64>, error_std: DVector<f64>) -> Result<Self> {
        if values.len() != error_std.len() {
            return Err(DsiError::mismatch("observation values vs error_std", values.len(), error_std.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DsiError::InvalidInput("non-finite observation value".into()));
        }
        if let Some(i) = error_std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(DsiError::InvalidInput(format!(
                "observation {} has non-positive error std {}",
                i, error_std[i]
            )));
        }
        Ok(Self { values, error_std })
    }

    /// Observations whose error std comes from the layout's history noise.
    pub fn from_layout(layout: &DataLayout, values: DVector<f64>) -> Result<Self> {
        let obs = Self::new(values, DVector::from_vec(layout.history_noise()))?;
        obs.check_layout(layout)?;
        Ok(obs)
    }

    pub fn check_layout(&self, layout: &DataLayout) -> Result<()> {
        if self.len() != layout.n_history() {
            return Err(DsiError::mismatch("observations vs history elements", layout.n_history(), self.len()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn error_std(&self) -> &DVector<f64> {
        &self.error_std
    }

    /// Diagonal of `Ce` (variances).
    pub fn ce_diag(&self) -> DVector<f64> {
        self.error_std.map(|s| s * s)
    }
}

/// Which rows of the ensemble an operation works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSubset {
    All,
    History,
}

/// Scaled anomaly matrix `(d_j - mean) / sqrt(N_e - 1)`, column per member.
pub fn anomaly_matrix(ens: &EnsembleMatrix, subset: RowSubset) -> Result<DMatrix<f64>> {
    match subset {
        RowSubset::All => anomalies(ens.data()),
        RowSubset::History => anomalies(&ens.history_block()),
    }
}

/// Scaled anomalies of a raw members-as-columns matrix.
pub fn anomalies(members: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ne = members.ncols();
    if ne < 2 {
        return Err(DsiError::DegenerateEnsemble(format!("need at least 2 members, got {ne}")));
    }
    let mean = row_means(members);
    let scale = 1.0 / ((ne - 1) as f64).sqrt();
    let mut out = members.clone();
    for mut col in out.column_iter_mut() {
        for (v, m) in col.iter_mut().zip(mean.iter()) {
            *v = (*v - m) * scale;
        }
    }
    Ok(out)
}

/// Shifted by the first column, so rows with identical entries get that
/// entry back exactly and their anomalies are exactly zero.
pub(crate) fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols() as f64;
    if m.ncols() == 0 {
        return DVector::zeros(m.nrows());
    }
    let shift = m.column(0).into_owned();
    let mut sum = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        sum += col - &shift;
    }
    shift + sum / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::layout::{DataElement, QuantityKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn layout(n: usize, n_hist: usize) -> Arc<DataLayout> {
        let elements = (0..n)
            .map(|i| DataElement {
                id: format!("e{i}"),
                well_id: "W".into(),
                x: 0.0,
                y: 0.0,
                time: i as f64,
                kind: QuantityKind::Other,
                is_history: i < n_hist,
                noise_std: 1.0,
            })
            .collect();
        Arc::new(DataLayout::new(elements).unwrap())
    }

    #[test]
    fn two_member_anomaly_by_hand() {
        let ens = EnsembleMatrix::new(DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), layout(2, 1)).unwrap();
        let dd = anomaly_matrix(&ens, RowSubset::All).unwrap();
        assert_eq!(ens.mean(), DVector::from_vec(vec![2.0, 3.0]));
        assert_eq!(dd, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 1.0]));
        let dh = anomaly_matrix(&ens, RowSubset::History).unwrap();
        assert_eq!(dh, DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]));
    }

    #[test]
    fn identical_members_give_zero_anomaly() {
        let ens = EnsembleMatrix::new(DMatrix::from_element(3, 4, 2.5), layout(3, 1)).unwrap();
        assert!(anomaly_matrix(&ens, RowSubset::All).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_member_is_degenerate() {
        let err = anomalies(&DMatrix::from_element(3, 1, 1.0)).unwrap_err();
        assert!(err.to_string().contains("degenerate ensemble"));
        assert!(EnsembleMatrix::new(DMatrix::from_element(3, 1, 1.0), layout(3, 1)).is_err());
    }

    #[test]
    fn three_member_covariance_matches_two_pass() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 4.0, -2.0, 0.5, 0.25, 3.0]);
        let dd = anomalies(&m).unwrap();
        let cov = &dd * dd.transpose();
        // two-pass oracle
        let mut oracle = DMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                let ma: f64 = m.row(a).iter().sum::<f64>() / 3.0;
                let mb: f64 = m.row(b).iter().sum::<f64>() / 3.0;
                let s: f64 = (0..3).map(|j| (m[(a, j)] - ma) * (m[(b, j)] - mb)).sum();
                oracle[(a, b)] = s / 2.0;
            }
        }
        assert_relative_eq!(cov, oracle, max_relative = 1e-12);
    }

    #[test]
    fn rejects_shape_and_nan() {
        assert!(EnsembleMatrix::new(DMatrix::zeros(3, 2), layout(2, 1)).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 1)] = f64::NAN;
        assert!(EnsembleMatrix::new(m, layout(2, 1)).is_err());
        assert!(Observations::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0])).is_err());
    }

    proptest! {
        #[test]
        fn anomaly_columns_sum_to_zero_and_reproduce_covariance(
            rows in 1usize..6, cols in 2usize..8,
            vals in proptest::collection::vec(-100.0f64..100.0, 48)
        ) {
            let m = DMatrix::from_fn(rows, cols, |i, j| vals[(i * cols + j) % vals.len()] + (i * j) as f64);
            let dd = anomalies(&m).unwrap();
            let norm = dd.norm().max(1.0);
            for r in 0..rows {
                prop_assert!(dd.row(r).sum().abs() <= 1e-10 * norm);
            }
            let cov = &dd * dd.transpose();
            let n = cols as f64;
            for a in 0..rows {
                for b in 0..rows {
                    let ma = m.row(a).sum() / n;
                    let mb = m.row(b).sum() / n;
                    let s: f64 = (0..cols).map(|j| (m[(a, j)] - ma) * (m[(b, j)] - mb)).sum::<f64>() / (n - 1.0);
                    prop_assert!((cov[(a, b)] - s).abs() <= 1e-10 * (1.0 + s.abs().max(cov.norm())));
                }
            }
        }
    }
}
