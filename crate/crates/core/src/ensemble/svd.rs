use nalgebra::{DMatrix, DVector};

use crate::error::{DsiError, Result};

/// Relative slack used when comparing cumulative energy fractions, so that
/// `xi = 1` keeps every numerically non-zero singular value even after
/// round-off in the sums.
const ENERGY_SLACK: f64 = 1e-12;

/// Leading part of an SVD, `A ~ U_r diag(sigma_r) V_r^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    /// `N x N_r`, orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// Positive and non-increasing.
    pub singular_values: DVector<f64>,
    pub rank: usize,
    /// `sum(sigma_1..sigma_r) / sum(all sigma)`.
    pub energy_kept: f64,
    /// Full spectrum of the input, descending (including discarded values).
    pub spectrum: Vec<f64>,
}

impl TruncatedSvd {
    /// `U_r diag(sigma_r)`.
    pub fn scaled_left(&self) -> DMatrix<f64> {
        let mut us = self.left_vectors.clone();
        for (mut col, s) in us.column_iter_mut().zip(self.singular_values.iter()) {
            col *= *s;
        }
        us
    }

    /// Largest discarded singular value, zero if nothing was discarded.
    pub fn first_discarded(&self) -> f64 {
        self.spectrum.get(self.rank).copied().unwrap_or(0.0)
    }
}

/// Number of leading singular values needed to reach energy fraction `xi`.
///
/// `sigma` must be sorted descending. Values at or below the numerical rank
/// threshold `max_dim * eps * sigma_1` are never retained.
pub fn energy_rank(sigma: &[f64], xi: f64, max_dim: usize) -> usize {
    let total: f64 = sigma.iter().sum();
    if sigma.is_empty() || total <= 0.0 {
        return 0;
    }
    let tol = (max_dim.max(1) as f64) * f64::EPSILON * sigma[0];
    let numerical_rank = sigma.iter().take_while(|&&s| s > tol).count();
    let target = xi * total - ENERGY_SLACK * total;
    let mut cum = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        cum += s;
        if cum >= target {
            return (i + 1).min(numerical_rank);
        }
    }
    numerical_rank
}

/// Energy-truncated SVD: the smallest `N_r` with
/// `sum_{i<=N_r} sigma_i / sum_i sigma_i >= xi`.
pub fn truncated_svd_energy(a: &DMatrix<f64>, xi: f64) -> Result<TruncatedSvd> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(DsiError::InvalidInput(format!("energy threshold must be in (0, 1], got {xi}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(DsiError::InvalidInput("matrix has non-finite entries".into()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(DsiError::RankZero);
    }
    let (u, spectrum) = left_svd(a)?;
    let rank = energy_rank(&spectrum, xi, a.nrows().max(a.ncols()));
    if rank == 0 {
        return Err(DsiError::RankZero);
    }
    let total: f64 = spectrum.iter().sum();
    let kept: f64 = spectrum[..rank].iter().sum();
    Ok(TruncatedSvd {
        left_vectors: u.columns(0, rank).into_owned(),
        singular_values: DVector::from_column_slice(&spectrum[..rank]),
        rank,
        energy_kept: kept / total,
        spectrum,
    })
}

/// Left singular vectors and singular values sorted descending.
///
/// Wide inputs (more members than rows) are first reduced by a thin QR of
/// `a^T`: with `a^T = Q R`, `a = R^T Q^T` shares its left vectors and
/// singular values with the square `R^T`.
fn left_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let square = if a.ncols() > a.nrows() {
        a.transpose().qr().r().transpose()
    } else {
        a.clone()
    };
    let svd = square.try_svd(true, false, f64::EPSILON, 0).ok_or_else(|| {
        DsiError::Numerical("SVD failed to converge".into())
    })?;
    let u = svd.u.ok_or_else(|| DsiError::Numerical("SVD did not return U".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let sorted_u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let sorted_sv = order.iter().map(|&i| sv[i].max(0.0)).collect();
    Ok((sorted_u, sorted_sv))
}

/// Approximate inverse of `C = dD_h dD_h^T + alpha Ce` (diagonal `Ce`) by
/// subspace inversion.
///
/// With `S = Ce^{-1/2} dD_h = U S V^T` truncated at energy `xi`,
/// `C^{-1} ~ Ce^{-1/2} U_r (Sigma_r^2 + alpha I)^{-1} U_r^T Ce^{-1/2}`.
/// The orthogonal complement of `U_r` is dropped unless
/// [`SubspaceInverse::with_complement`] is used, which adds
/// `Ce^{-1/2} (I - U_r U_r^T) Ce^{-1/2} / alpha` and makes the operator the
/// exact inverse of the truncated covariance.
#[derive(Debug, Clone)]
pub struct SubspaceInverse {
    inv_sqrt_ce: DVector<f64>,
    basis: DMatrix<f64>,
    weights: DVector<f64>,
    alpha: f64,
    complement: bool,
}

impl SubspaceInverse {
    pub fn new(delta_dh: &DMatrix<f64>, ce_diag: &DVector<f64>, alpha: f64, xi: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DsiError::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        if delta_dh.nrows() != ce_diag.len() {
            return Err(DsiError::mismatch("Ce diagonal vs history rows", delta_dh.nrows(), ce_diag.len()));
        }
        if let Some(v) = ce_diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(DsiError::InvalidInput(format!("Ce diagonal entries must be positive, got {v}")));
        }
        let inv_sqrt_ce = ce_diag.map(|v| 1.0 / v.sqrt());
        let mut scaled = delta_dh.clone();
        for (mut row, s) in scaled.row_iter_mut().zip(inv_sqrt_ce.iter()) {
            row *= *s;
        }
        let (basis, weights) = match truncated_svd_energy(&scaled, xi) {
            Ok(svd) => {
                let w = svd.singular_values.map(|s| 1.0 / (s * s + alpha));
                (svd.left_vectors, w)
            }
            // An all-zero anomaly spans no subspace.
            Err(DsiError::RankZero) => (DMatrix::zeros(delta_dh.nrows(), 0), DVector::zeros(0)),
            Err(e) => return Err(e),
        };
        Ok(Self {
            inv_sqrt_ce,
            basis,
            weights,
            alpha,
            complement: false,
        })
    }

    pub fn with_complement(mut self) -> Self {
        self.complement = true;
        self
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.inv_sqrt_ce.len()
    }

    pub fn apply(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.dim() {
            return Err(DsiError::mismatch("subspace inverse right-hand side", self.dim(), rhs.len()));
        }
        let z = rhs.component_mul(&self.inv_sqrt_ce);
        let coeff = self.basis.tr_mul(&z);
        let mut y = &self.basis * coeff.component_mul(&self.weights);
        if self.complement {
            let proj = &self.basis * coeff;
            y += (z - proj) / self.alpha;
        }
        Ok(y.component_mul(&self.inv_sqrt_ce))
    }

    /// Applies the operator to every column of `rhs`.
    pub fn apply_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(DsiError::mismatch("subspace inverse right-hand side", self.dim(), rhs.nrows()));
        }
        let mut z = rhs.clone();
        for (mut row, s) in z.row_iter_mut().zip(self.inv_sqrt_ce.iter()) {
            row *= *s;
        }
        let coeff = self.basis.tr_mul(&z);
        let mut weighted = coeff.clone();
        for (mut row, w) in weighted.row_iter_mut().zip(self.weights.iter()) {
            row *= *w;
        }
        let mut y = &self.basis * weighted;
        if self.complement {
            y += (z - &self.basis * coeff) / self.alpha;
        }
        for (mut row, s) in y.row_iter_mut().zip(self.inv_sqrt_ce.iter()) {
            row *= *s;
        }
        Ok(y)
    }

    /// The operator as a dense symmetric `N_{d,h} x N_{d,h}` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.apply_matrix(&DMatrix::identity(self.dim(), self.dim()))
            .expect("identity has matching rows")
    }
}

/// `(dD_h dD_h^T + alpha Ce)^{-1} rhs` via [`SubspaceInverse`].
pub fn subspace_inverse_apply(
    delta_dh: &DMatrix<f64>,
    ce_diag: &DVector<f64>,
    alpha: f64,
    xi: f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    SubspaceInverse::new(delta_dh, ce_diag, alpha, xi)?.apply(rhs)
}
