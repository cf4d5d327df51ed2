//! Baseline DSI: PCA parameterization of the data vector, empirical-CDF
//! anamorphosis and randomized maximum likelihood sampling in coefficient
//! space, minimized with L-BFGS.

mod anamorphosis;
pub mod lbfgs;
mod pca;
mod sampler;

pub use anamorphosis::{anamorphose, fit_anamorphosis, Anamorphosis, EmpiricalCdf};
pub use lbfgs::{LbfgsConfig, LbfgsReport, Termination};
pub use pca::{fit_pca, PcaModel};
pub use sampler::{rml_objective_and_gradient, run_dsi_rml, RmlConfig, RmlOutcome, RmlProblem, SampleStatus};
