use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::anamorphosis::{anamorphose, fit_anamorphosis, Anamorphosis};
use super::lbfgs::{minimize, LbfgsConfig, LbfgsReport, Termination};
use super::pca::{fit_pca, PcaModel};
use crate::ensemble::{EnsembleMatrix, Observations};
use crate::error::{DsiError, Result};
use crate::seeding::{standard_normals, Stream};

/// One RML minimization in PCA-coefficient space.
#[derive(Debug, Clone)]
pub struct RmlProblem<'a> {
    /// `d_obs* ~ N(d_obs, Ce)`.
    pub perturbed_obs: DVector<f64>,
    /// `x* ~ N(0, I)`.
    pub prior_coeff: DVector<f64>,
    pub pca: &'a PcaModel,
    pub anamorphosis: Option<&'a Anamorphosis>,
    pub ce_diag: &'a DVector<f64>,
}

impl RmlProblem<'_> {
    fn check(&self) -> Result<()> {
        let nh = self.pca.history_rows().len();
        if self.perturbed_obs.len() != nh || self.ce_diag.len() != nh {
            return Err(DsiError::mismatch("RML observation length", nh, self.perturbed_obs.len()));
        }
        if self.prior_coeff.len() != self.pca.rank() {
            return Err(DsiError::mismatch("RML prior coefficient length", self.pca.rank(), self.prior_coeff.len()));
        }
        Ok(())
    }
}

/// Objective value and the gradient of the untransformed objective.
///
/// The value uses the anamorphosed history prediction when a transform is
/// present; the gradient always uses the raw PCA prediction,
/// `H_h^T Ce^{-1} (d_h(x) - d_obs*) + (x - x*)`.
pub fn rml_objective_and_gradient(x: &DVector<f64>, prob: &RmlProblem<'_>) -> (f64, DVector<f64>) {
    let raw = prob.pca.predict_history(x);
    let weighted_raw = (&raw - &prob.perturbed_obs).component_div(prob.ce_diag);
    let data_term = match prob.anamorphosis {
        None => 0.5 * (&raw - &prob.perturbed_obs).dot(&weighted_raw),
        Some(model) => prob
            .pca
            .history_rows()
            .iter()
            .enumerate()
            .map(|(k, &row)| {
                let r = anamorphose(raw[k], row, model) - prob.perturbed_obs[k];
                0.5 * r * r / prob.ce_diag[k]
            })
            .sum(),
    };
    let dx = x - &prob.prior_coeff;
    let value = data_term + 0.5 * dx.norm_squared();
    let grad = prob.pca.half_cov_h().tr_mul(&weighted_raw) + dx;
    (value, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmlConfig {
    pub energy_xi: f64,
    pub n_samples: usize,
    pub anamorphosis: bool,
    /// PCA draws used for `cdf_2`; defaults to the prior ensemble size.
    pub anamorphosis_draws: Option<usize>,
    /// SVD of `Ce^{-1/2} dD` instead of `dD`.
    pub rescale: bool,
    pub optimizer: LbfgsConfig,
    pub rng_seed: u64,
    pub parallel: bool,
}

impl Default for RmlConfig {
    fn default() -> Self {
        Self {
            energy_xi: 0.99,
            n_samples: 100,
            anamorphosis: true,
            anamorphosis_draws: None,
            rescale: false,
            optimizer: LbfgsConfig::default(),
            rng_seed: 0,
            parallel: true,
        }
    }
}

impl RmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(DsiError::Config(format!(
                "rml.samples must be at least 2 to form a posterior ensemble, got {}",
                self.n_samples
            )));
        }
        if !(self.energy_xi > 0.0 && self.energy_xi <= 1.0) {
            return Err(DsiError::Config(format!("svd.energy must be in (0, 1], got {}", self.energy_xi)));
        }
        if self.optimizer.memory == 0 || self.optimizer.max_iterations == 0 {
            return Err(DsiError::Config("rml optimizer memory and iteration cap must be positive".into()));
        }
        if self.anamorphosis_draws == Some(0) {
            return Err(DsiError::Config("rml.anamorphosis_draws must be positive".into()));
        }
        Ok(())
    }
}

/// Convergence record of one posterior sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStatus {
    pub sample: usize,
    pub converged: bool,
    pub termination: Termination,
    pub grad_norm: f64,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RmlOutcome {
    pub posterior: EnsembleMatrix,
    pub samples: Vec<SampleStatus>,
    pub pca_rank: usize,
}

impl RmlOutcome {
    pub fn n_converged(&self) -> usize {
        self.samples.iter().filter(|s| s.converged).count()
    }

    pub fn unconverged(&self) -> impl Iterator<Item = &SampleStatus> {
        self.samples.iter().filter(|s| !s.converged)
    }
}

/// Draws `n_samples` RML samples of the full data vector.
///
/// Samples that fail to converge stay in the posterior but are flagged in
/// [`RmlOutcome::samples`].
pub fn run_dsi_rml(prior: &EnsembleMatrix, obs: &Observations, cfg: &RmlConfig) -> Result<RmlOutcome> {
    cfg.validate()?;
    let layout = prior.layout();
    obs.check_layout(layout)?;
    if layout.n_history() == 0 {
        return Err(DsiError::InvalidInput("layout has no history elements".into()));
    }
    let scale = if cfg.rescale { Some(rescaling_std(prior, obs)?) } else { None };
    let pca = fit_pca(prior, cfg.energy_xi, scale.as_ref())?;
    let anamorphosis = if cfg.anamorphosis {
        let draws = cfg.anamorphosis_draws.unwrap_or(prior.n_members());
        Some(fit_anamorphosis(prior, &pca, draws, cfg.rng_seed)?)
    } else {
        None
    };
    let ce_diag = obs.ce_diag();

    let solve = |s: usize| -> (DVector<f64>, SampleStatus) {
        let noise = standard_normals(cfg.rng_seed, Stream::RmlObservation, &[s as u64], obs.len());
        let perturbed_obs = obs.values() + DVector::from_vec(noise).component_mul(obs.error_std());
        let prior_coeff = DVector::from_vec(standard_normals(cfg.rng_seed, Stream::RmlPrior, &[s as u64], pca.rank()));
        let problem = RmlProblem {
            perturbed_obs,
            prior_coeff: prior_coeff.clone(),
            pca: &pca,
            anamorphosis: anamorphosis.as_ref(),
            ce_diag: &ce_diag,
        };
        let rep: LbfgsReport = minimize(|x| rml_objective_and_gradient(x, &problem), prior_coeff, &cfg.optimizer);
        let raw = pca.predict(&rep.x);
        let d = match &anamorphosis {
            Some(model) => model.transform(&raw),
            None => raw,
        };
        let status = SampleStatus {
            sample: s,
            converged: rep.converged(),
            termination: rep.termination,
            grad_norm: rep.grad_norm,
            iterations: rep.iterations,
            objective: rep.value,
        };
        (d, status)
    };
    // the problem closure borrows `pca`; check dimensions once up front
    RmlProblem {
        perturbed_obs: obs.values().clone(),
        prior_coeff: DVector::zeros(pca.rank()),
        pca: &pca,
        anamorphosis: anamorphosis.as_ref(),
        ce_diag: &ce_diag,
    }
    .check()?;

    let results: Vec<(DVector<f64>, SampleStatus)> = if cfg.parallel {
        (0..cfg.n_samples).into_par_iter().map(solve).collect()
    } else {
        (0..cfg.n_samples).map(solve).collect()
    };
    let (columns, samples): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let posterior = prior.with_data(DMatrix::from_columns(&columns))?;
    Ok(RmlOutcome {
        posterior,
        samples,
        pca_rank: pca.rank(),
    })
}

/// Per-element standard deviations for the rescaled SVD: observation errors on
/// history rows, layout noise on forecast rows.
fn rescaling_std(prior: &EnsembleMatrix, obs: &Observations) -> Result<DVector<f64>> {
    let layout = prior.layout();
    let mut s = DVector::from_iterator(layout.len(), layout.elements().iter().map(|e| e.noise_std));
    for (k, &row) in layout.history_indices().iter().enumerate() {
        s[row] = obs.error_std()[k];
    }
    if let Some(i) = s.iter().position(|v| *v <= 0.0) {
        return Err(DsiError::Config(format!(
            "rml.rescale needs a positive noise_std on every element; '{}' has none",
            layout.element(i).id
        )));
    }
    Ok(s)
}
