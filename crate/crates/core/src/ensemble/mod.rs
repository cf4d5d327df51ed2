//! Ensemble statistics shared by both inversion methods: layouts, ensemble and
//! observation containers, anomaly matrices, energy-truncated SVD and the
//! subspace inverse of the innovation covariance.

mod layout;
mod matrix;
mod svd;

pub use layout::{DataElement, DataLayout, QuantityKind};
pub use matrix::{anomalies, anomaly_matrix, EnsembleMatrix, Observations, RowSubset};
pub use svd::{energy_rank, subspace_inverse_apply, truncated_svd_energy, SubspaceInverse, TruncatedSvd};
