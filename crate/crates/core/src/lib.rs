//! Data-space inversion (DSI) of production forecasts.
//!
//! Both inversion methods work directly on a prior ensemble of predicted-data
//! vectors `d = [d_h; d_f]` (history and forecast parts) and the observed
//! history `d_obs`. No forward model is run after the prior ensemble exists.
//!
//! - [`esmda`]: iterative ensemble smoother (ES-MDA) applied to the data
//!   vectors, with subspace inversion of the innovation covariance and optional
//!   Gaspari-Cohn localization ([`localization`]).
//! - [`rml`]: PCA parameterization of `d`, empirical-CDF anamorphosis and
//!   randomized maximum likelihood sampling with an L-BFGS optimizer.
//! - [`diagnostics`]: normalized data mismatch, percentile bands, coverage.
//! - [`testbed`]: synthetic linear-Gaussian and decline-curve cases.
//! - [`cli`]: file formats, run configuration and the batch pipeline behind
//!   the `dsi` binary.

pub mod cli;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod esmda;
pub mod localization;
pub mod rml;
pub mod seeding;
pub mod testbed;

pub use ensemble::{
    anomaly_matrix, subspace_inverse_apply, truncated_svd_energy, DataElement, DataLayout,
    EnsembleMatrix, Observations, QuantityKind, RowSubset, SubspaceInverse, TruncatedSvd,
};
pub use error::{DsiError, Result};
pub use esmda::{esmda_step, kalman_gain, run_dsi_esmda, EsmdaConfig, MdaSchedule, Perturbation};
pub use localization::{build_localization, composite_ratio, gaspari_cohn, LocalizationMatrix, LocalizationSpec};
