//! Normalized data mismatch, per-element percentiles and band coverage.

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{EnsembleMatrix, Observations};
use crate::error::{DsiError, Result};

/// Normalized mismatch `O_{N,d}` of every member, with its mean and sample
/// standard deviation across members.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    pub per_member: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// `O_{N,d} = 1/(2 N_{d,h}) sum_i ((d_obs,i - d_h,i) / sigma_e,i)^2` per member.
///
/// One standard deviation everywhere gives 0.5, two give 2, three give 4.5.
pub fn normalized_mismatch(ens: &EnsembleMatrix, obs: &Observations) -> Result<MismatchReport> {
    let hist = ens.layout().history_indices();
    if hist.is_empty() {
        return Err(DsiError::InvalidInput("normalized mismatch needs at least one history element".into()));
    }
    obs.check_layout(ens.layout())?;
    let nh = hist.len() as f64;
    let per_member: Vec<f64> = ens
        .data()
        .column_iter()
        .map(|col| {
            let ss: f64 = hist
                .iter()
                .enumerate()
                .map(|(k, &row)| ((obs.values()[k] - col[row]) / obs.error_std()[k]).powi(2))
                .sum();
            ss / (2.0 * nh)
        })
        .collect();
    let (mean, std) = mean_std(&per_member);
    Ok(MismatchReport { per_member, mean, std })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Empirical quantile of sorted samples, linear between order statistics
/// (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        sorted[lo.min(sorted.len() - 1)]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Per-element quantiles; column `k` of `values` holds probability `probs[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileBand {
    pub probs: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl PercentileBand {
    pub fn column(&self, p: f64) -> Option<DVector<f64>> {
        self.probs
            .iter()
            .position(|q| (q - p).abs() < 1e-12)
            .map(|k| self.values.column(k).into_owned())
    }

    /// P10, P50 and P90 columns.
    pub fn p10_p50_p90(&self) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        Some((self.column(0.1)?, self.column(0.5)?, self.column(0.9)?))
    }

    /// `P_hi - P_lo` per element.
    pub fn width(&self, lo: f64, hi: f64) -> Option<DVector<f64>> {
        Some(self.column(hi)? - self.column(lo)?)
    }
}

pub const P10_P50_P90: [f64; 3] = [0.1, 0.5, 0.9];

pub fn percentile_band(ens: &EnsembleMatrix, probs: &[f64]) -> Result<PercentileBand> {
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(DsiError::InvalidInput(format!("percentile probabilities must be in (0, 1), got {p}")));
    }
    let nd = ens.n_data();
    let mut values = DMatrix::zeros(nd, probs.len());
    let mut row_buf = Vec::with_capacity(ens.n_members());
    for i in 0..nd {
        row_buf.clear();
        row_buf.extend(ens.data().row(i).iter().copied());
        row_buf.sort_by(f64::total_cmp);
        for (k, &p) in probs.iter().enumerate() {
            values[(i, k)] = quantile_sorted(&row_buf, p);
        }
    }
    Ok(PercentileBand {
        probs: probs.to_vec(),
        values,
    })
}

/// Fraction of elements whose reference value lies in `[P_lo, P_hi]`.
pub fn coverage(ens: &EnsembleMatrix, reference: &DVector<f64>, lo: f64, hi: f64) -> Result<f64> {
    if reference.len() != ens.n_data() {
        return Err(DsiError::mismatch("coverage reference length", ens.n_data(), reference.len()));
    }
    if lo > hi {
        return Err(DsiError::InvalidInput(format!("coverage band [{lo}, {hi}] is reversed")));
    }
    let band = percentile_band(ens, &[lo, hi])?;
    let inside = (0..ens.n_data())
        .filter(|&i| reference[i] >= band.values[(i, 0)] && reference[i] <= band.values[(i, 1)])
        .count();
    Ok(inside as f64 / ens.n_data() as f64)
}
