use super::ModelError;
use crate::autodiff::{Bindings, NodeId, Tape};
use crate::distributions::TapeDist;
use crate::rng::RngStream;

/// A joint density `q(z, ψ)` over a latent `z` and an auxiliary `ψ`, with
/// any conditioning input already bound into the value. Points are flat
/// real vectors; finite supports encode their states as `0.0, 1.0, …`.
///
/// Log-densities return `-∞` outside the support.
pub trait HierarchicalModel {
    fn sample_psi(&self, rng: &mut RngStream) -> Vec<f64>;
    fn sample_z_given_psi(&self, psi: &[f64], rng: &mut RngStream) -> Vec<f64>;
    fn log_psi_prior(&self, psi: &[f64]) -> f64;
    fn log_z_given_psi(&self, z: &[f64], psi: &[f64]) -> f64;

    fn log_joint(&self, z: &[f64], psi: &[f64]) -> f64 {
        self.log_psi_prior(psi) + self.log_z_given_psi(z, psi)
    }

    /// `log ∫ q(z, ψ) dψ`, for models where it is tractable.
    fn exact_log_marginal(&self, _z: &[f64]) -> Option<f64> {
        None
    }

    /// A draw from `q(ψ | z)`, for models where it is tractable.
    fn sample_exact_posterior(&self, _z: &[f64], _rng: &mut RngStream) -> Option<Vec<f64>> {
        None
    }

    /// Draws `(z, ψ)` jointly: `ψ` first, then `z | ψ`.
    fn sample_joint(&self, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let psi = self.sample_psi(rng);
        let z = self.sample_z_given_psi(&psi, rng);
        (z, psi)
    }
}

/// A conditional density `τ(ψ | z)` approximating the inverse model.
pub trait AuxiliaryInference {
    fn log_prob(&self, psi: &[f64], z: &[f64]) -> f64;
    fn sample(&self, z: &[f64], rng: &mut RngStream) -> Vec<f64>;
}

/// Density of an explicit (non-hierarchical) prior `p(z)`.
pub trait ExplicitPrior {
    fn log_prob(&self, z: &[f64]) -> f64;
}

/// `log p(x | z)` with the observation bound in.
pub trait Likelihood {
    fn log_likelihood(&self, z: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> ExplicitPrior for F {
    fn log_prob(&self, z: &[f64]) -> f64 {
        self(z)
    }
}

impl<F: Fn(&[f64]) -> f64> Likelihood for F {
    fn log_likelihood(&self, z: &[f64]) -> f64 {
        self(z)
    }
}

/// `τ(ψ | z) := q(ψ)`, the choice that recovers SIVI.
pub struct PriorAsTau<'a, M: ?Sized>(pub &'a M);

impl<M: HierarchicalModel + ?Sized> AuxiliaryInference for PriorAsTau<'_, M> {
    fn log_prob(&self, psi: &[f64], _z: &[f64]) -> f64 {
        self.0.log_psi_prior(psi)
    }

    fn sample(&self, _z: &[f64], rng: &mut RngStream) -> Vec<f64> {
        self.0.sample_psi(rng)
    }
}

/// `τ(ψ | z) := q(ψ | z)` for models with a tractable inverse. Panics if the
/// model cannot provide it.
pub struct ExactPosteriorTau<'a, M: ?Sized>(pub &'a M);

impl<M: HierarchicalModel + ?Sized> AuxiliaryInference for ExactPosteriorTau<'_, M> {
    fn log_prob(&self, psi: &[f64], z: &[f64]) -> f64 {
        let marginal = self
            .0
            .exact_log_marginal(z)
            .expect("exact posterior requires a tractable marginal");
        self.0.log_joint(z, psi) - marginal
    }

    fn sample(&self, z: &[f64], rng: &mut RngStream) -> Vec<f64> {
        self.0
            .sample_exact_posterior(z, rng)
            .expect("exact posterior sampling is not available for this model")
    }
}

/// `q(z, ψ) = q(z) q(ψ)`: a plain distribution dressed as a hierarchy, the
/// setting in which the hierarchical bounds reduce to the ELBO.
pub struct FactorizedModel<Z, P> {
    pub z: Z,
    pub psi: P,
}

/// Minimal sampler/density pair used by [`FactorizedModel`].
pub trait Component {
    fn sample(&self, rng: &mut RngStream) -> Vec<f64>;
    fn log_prob(&self, value: &[f64]) -> f64;
}

impl Component for crate::distributions::FactorizedSpec {
    fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        crate::distributions::FactorizedSpec::sample(self, rng)
    }

    fn log_prob(&self, value: &[f64]) -> f64 {
        crate::distributions::FactorizedSpec::log_prob(self, value).unwrap_or(f64::NEG_INFINITY)
    }
}

impl<Z: Component, P: Component> HierarchicalModel for FactorizedModel<Z, P> {
    fn sample_psi(&self, rng: &mut RngStream) -> Vec<f64> {
        self.psi.sample(rng)
    }

    fn sample_z_given_psi(&self, _psi: &[f64], rng: &mut RngStream) -> Vec<f64> {
        self.z.sample(rng)
    }

    fn log_psi_prior(&self, psi: &[f64]) -> f64 {
        self.psi.log_prob(psi)
    }

    fn log_z_given_psi(&self, z: &[f64], _psi: &[f64]) -> f64 {
        self.z.log_prob(z)
    }

    fn exact_log_marginal(&self, z: &[f64]) -> Option<f64> {
        Some(self.z.log_prob(z))
    }

    fn sample_exact_posterior(&self, _z: &[f64], rng: &mut RngStream) -> Option<Vec<f64>> {
        Some(self.psi.sample(rng))
    }
}

/// The prior `p(z)` of a generative model: either explicit, or itself a
/// hierarchy `p(z, ζ)` with an auxiliary `ρ(ζ | z)` and `samples` ζ-draws.
#[derive(Clone, Copy)]
pub enum LatentPrior<'a> {
    Explicit(&'a dyn ExplicitPrior),
    Hierarchical {
        model: &'a dyn HierarchicalModel,
        rho: &'a dyn AuxiliaryInference,
        samples: usize,
    },
}

/// `p(x, z) = p(x | z) p(z)` with `x` bound.
#[derive(Clone, Copy)]
pub struct Generative<'a> {
    pub prior: LatentPrior<'a>,
    pub likelihood: &'a dyn Likelihood,
}

/// `log q(z, ψ)` recorded on a tape, one row per sample, for models whose
/// own parameters are fixed (only `τ` is trained through it).
pub trait TapeJoint: Sync {
    fn log_joint_tape(&self, tape: &mut Tape, z: NodeId, psi: NodeId) -> Result<NodeId, ModelError>;
}

/// A trainable `τ(ψ | z)`: its distribution at each row of `z`.
pub trait TapeAuxiliary: Sync {
    fn dist_tape(&self, tape: &mut Tape, params: &Bindings, z: NodeId) -> Result<TapeDist, ModelError>;
}
