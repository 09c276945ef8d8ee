//! Hierarchical models `q(z, ψ)`, auxiliary inverses `τ(ψ | z)`, and the
//! concrete families used by tests and experiments.

pub mod checkpoint;
mod continuous;
mod discrete;
mod mlp;
mod traits;
mod vae;

pub use continuous::{
    make_laplace_scale_mixture, make_snr_task, normal_density, snr_optimal_tau, GaussianHierarchy, LaplaceScaleMixture,
    LinearGaussianTau, LinearTauNet, MIXING_RATE, SNR_DIM, SNR_TAU_VAR,
};
pub use discrete::{make_discrete_hvm, DiscreteHvm, DiscreteTau, Table};
pub use mlp::{CondAt, Head, Mlp, MlpCond, GATE_INIT, POSITIVE_FLOOR};
pub use traits::{
    AuxiliaryInference, Component, ExactPosteriorTau, ExplicitPrior, FactorizedModel, Generative, HierarchicalModel,
    LatentPrior, Likelihood, PriorAsTau, TapeAuxiliary, TapeJoint,
};
pub use vae::{
    k_major_to_rows, make_mini_vae, std_normal_rows, tile, EncoderAt, IwhviNodes, LikelihoodAt, MiniVae,
    StandardNormalPrior, TauAt, VaeShape,
};

use crate::autodiff::AutodiffError;
use crate::distributions::DistributionError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} is not a probability vector (sum {sum})")]
    NotAProbabilityVector { what: &'static str, sum: f64 },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}
