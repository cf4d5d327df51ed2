//! Synthetic forward models standing in for a reservoir simulator.

mod decline;
mod linear;

pub use decline::{
    build_decline_case, build_decline_case_with, DeclineCase, DeclinePrior, DeclineSpec, ReferenceDraw, WellParams,
    MONTH_DAYS,
};
pub use linear::{build_linear_case, LinearDims, LinearGaussianCase};
