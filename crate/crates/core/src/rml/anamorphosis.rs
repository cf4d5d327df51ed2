use nalgebra::DVector;
use rayon::prelude::*;

use super::pca::PcaModel;
use crate::ensemble::EnsembleMatrix;
use crate::error::{DsiError, Result};
use crate::seeding::{standard_normals, Stream};

/// Empirical CDF with plotting positions `(k - 0.5)/n` at the order
/// statistics, linear in between and flat outside the sample range.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(DsiError::InvalidInput("empirical CDF needs at least one sample".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(DsiError::InvalidInput("empirical CDF samples must be finite".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    fn position(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.sorted.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let n = self.sorted.len();
        if v <= self.sorted[0] {
            return self.position(0);
        }
        if v >= self.sorted[n - 1] {
            return self.position(n - 1);
        }
        // last order statistic <= v; its successor is strictly greater
        let k = self.sorted.partition_point(|s| *s <= v) - 1;
        let (lo, hi) = (self.sorted[k], self.sorted[k + 1]);
        let t = (v - lo) / (hi - lo);
        self.position(k) + t / n as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let p = p.clamp(self.position(0), self.position(n - 1));
        let t = p * n as f64 - 0.5;
        let mut k = t.floor();
        let mut frac = t - k;
        if frac > 1.0 - 1e-12 {
            k += 1.0;
            frac = 0.0;
        }
        let k = (k.max(0.0) as usize).min(n - 1);
        if k + 1 >= n || frac <= 1e-12 {
            return self.sorted[k];
        }
        self.sorted[k] + frac * (self.sorted[k + 1] - self.sorted[k])
    }
}

/// Per-element pair of CDFs: `cdf_1` over prior samples of `d_i`, `cdf_2` over
/// samples of the PCA prediction `d_pca,i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Anamorphosis {
    data_cdfs: Vec<EmpiricalCdf>,
    pca_cdfs: Vec<EmpiricalCdf>,
}

impl Anamorphosis {
    /// `data_samples[i]` and `pca_samples[i]` are the samples of element `i`.
    pub fn from_samples(data_samples: Vec<Vec<f64>>, pca_samples: Vec<Vec<f64>>) -> Result<Self> {
        if data_samples.len() != pca_samples.len() {
            return Err(DsiError::mismatch("anamorphosis element count", data_samples.len(), pca_samples.len()));
        }
        Ok(Self {
            data_cdfs: data_samples.into_iter().map(EmpiricalCdf::new).collect::<Result<_>>()?,
            pca_cdfs: pca_samples.into_iter().map(EmpiricalCdf::new).collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.data_cdfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data_cdfs.is_empty()
    }

    /// Maps every entry of a full PCA prediction.
    pub fn transform(&self, d_pca: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(d_pca.len(), |i, _| anamorphose(d_pca[i], i, self))
    }
}

/// `cdf_1^{-1}(cdf_2(value))` for element `element`.
pub fn anamorphose(value: f64, element: usize, model: &Anamorphosis) -> f64 {
    let p = model.pca_cdfs[element].cdf(value);
    model.data_cdfs[element].quantile(p)
}

/// Builds the transform from the prior ensemble and `n_draws` PCA
/// realizations `mean + C_d^{1/2} x`, `x ~ N(0, I)`, drawn from `seed`.
pub fn fit_anamorphosis(prior: &EnsembleMatrix, pca: &PcaModel, n_draws: usize, seed: u64) -> Result<Anamorphosis> {
    if n_draws == 0 {
        return Err(DsiError::Config("anamorphosis needs at least one PCA draw".into()));
    }
    let draws: Vec<DVector<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let x = DVector::from_vec(standard_normals(seed, Stream::AnamorphosisDraws, &[k as u64], pca.rank()));
            pca.predict(&x)
        })
        .collect();
    let data_samples = (0..prior.n_data())
        .map(|i| prior.data().row(i).iter().copied().collect())
        .collect();
    let pca_samples = (0..prior.n_data())
        .map(|i| draws.iter().map(|d| d[i]).collect())
        .collect();
    Anamorphosis::from_samples(data_samples, pca_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_maps_to_median() {
        let model = Anamorphosis::from_samples(vec![vec![3.0, 1.0, 2.0]], vec![vec![10.0, 30.0, 20.0]]).unwrap();
        assert!((anamorphose(20.0, 0, &model) - 2.0).abs() < 1e-15);
        assert_eq!(anamorphose(5.0, 0, &model), 1.0);
        assert_eq!(anamorphose(99.0, 0, &model), 3.0);
        // halfway between order statistics stays halfway
        assert!((anamorphose(15.0, 0, &model) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn identity_when_cdfs_coincide() {
        let s = vec![0.3, -1.2, 4.5, 2.2, 2.2, 9.0];
        let model = Anamorphosis::from_samples(vec![s.clone()], vec![s.clone()]).unwrap();
        for v in s.iter().filter(|v| **v != 2.2) {
            assert!((anamorphose(*v, 0, &model) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn plotting_positions() {
        let c = EmpiricalCdf::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.cdf(0.0), 0.125);
        assert_eq!(c.cdf(1.0), 0.125);
        assert_eq!(c.cdf(2.5), 0.5);
        assert_eq!(c.cdf(10.0), 0.875);
        assert_eq!(c.quantile(0.0), 1.0);
        assert_eq!(c.quantile(0.5), 2.5);
        assert_eq!(c.quantile(1.0), 4.0);
        assert!(EmpiricalCdf::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_range_preserving(
            data in proptest::collection::vec(-50.0f64..50.0, 2..30),
            pca in proptest::collection::vec(-80.0f64..80.0, 2..30),
            a in -100.0f64..100.0, b in -100.0f64..100.0,
        ) {
            let lo_d = data.iter().copied().fold(f64::INFINITY, f64::min);
            let hi_d = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let model = Anamorphosis::from_samples(vec![data], vec![pca]).unwrap();
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            let (fx, fy) = (anamorphose(x, 0, &model), anamorphose(y, 0, &model));
            prop_assert!(fx <= fy + 1e-12);
            prop_assert!(fx >= lo_d && fy <= hi_d);
        }
    }
}
