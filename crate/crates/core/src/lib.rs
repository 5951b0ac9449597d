//! Selection of minimal sufficient confounder subsets from observational
//! data, matching estimators for average treatment effects, and a seeded
//! simulation harness that scores the selection algorithms against known
//! ground truth.
//!
//! Two screening backends decide which covariates a response is
//! conditionally independent of: a sliced-inverse-regression backend with
//! marginal coordinate tests for all-continuous covariates ([`sdr`]), and a
//! mixed-kernel regression backend that smooths irrelevant covariates out
//! through cross-validated bandwidths ([`kernel`]). Two backward-elimination
//! selection algorithms ([`select`]) orchestrate either backend to produce
//! treatment-side and outcome-side covariate subsets, and [`estimate`]
//! matches on the chosen subset (raw vector norm or propensity score) to
//! estimate average treatment effects.

pub mod data;
pub mod error;
pub mod estimate;
pub mod io;
pub mod kernel;
pub mod optim;
pub mod sdr;
pub mod seed;
pub mod select;
pub mod sim;

pub use data::{
    AlgorithmChoice, BackendKind, Column, Dataset, IndexSet, SelectionBundle, VariableKind,
};
pub use error::{Error, ErrorClass, Result};
