//! Importance-weighted sandwich bounds for hierarchical variational models.
//!
//! The crate is layered bottom-up: a small reverse-mode [`autodiff`] tape,
//! parametric [`distributions`], concrete hierarchical [`models`], the
//! Monte Carlo [`bounds`] themselves, gradient estimators in [`grad`], and
//! exact ground-truth machinery in [`oracle`]. [`experiments`] wires these
//! into the seeded training/evaluation runs the CLI exposes.

pub mod autodiff;
pub mod bounds;
pub mod distributions;
pub mod experiments;
pub mod grad;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod special;
