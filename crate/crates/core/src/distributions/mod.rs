//! Parametric densities with log-density evaluation and reparameterized
//! sampling.
//!
//! [`DistributionSpec`] carries plain real parameters; [`TapeDist`] carries
//! tape nodes so densities and samples are differentiable with respect to
//! the parameters. Gamma draws are differentiated implicitly through the
//! CDF (see [`gamma_implicit_grad`]).

mod gamma;
mod spec;
mod tape;

pub use gamma::{implicit_grad as gamma_implicit_grad, sample_standard as sample_standard_gamma};
pub use spec::{DistributionSpec, FactorizedSpec};
pub use tape::TapeDist;

use crate::autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("{value} is outside the support of {kind}")]
    OutsideSupport { kind: &'static str, value: f64 },
    #[error("{operation} is not supported for {kind}")]
    UnsupportedKind {
        kind: &'static str,
        operation: &'static str,
    },
    #[error("expected {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, DistributionError>;
