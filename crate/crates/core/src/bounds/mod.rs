//! Monte Carlo estimators built from `q(z, ψ)` and an auxiliary `τ(ψ | z)`.
//!
//! Every random estimator is a thin wrapper: it draws its samples in a fixed
//! documented order and hands them to a deterministic `*_given` core. The
//! cores are what the enumeration oracle and the shared-randomness tests use.
//!
//! Sample order conventions (they make the special-case identities hold
//! draw-for-draw under a shared stream):
//! - ELBO family, per outer sample: `ψ₀ ~ q(ψ)`, `z ~ q(z | ψ₀)`,
//!   `ψ_{1:K} ~ τ(· | z)`, then `ζ_{1:L} ~ ρ(· | z)` for hierarchical priors.
//! - `ψ₀` always sits at index 0 of a `ψ` list.

mod elbo;
mod estimate;
mod kl;
mod marginal;

pub use elbo::{
    diwhvi_elbo, diwhvi_given, draw_outer, dsivi_elbo, elbo, eval_variant, hvm_elbo, iwhvi_elbo, iwhvi_given,
    log_prior_given, reused_given, sivi_elbo, sivi_reused, OuterDraw,
};
pub use estimate::{ess, log_mean_exp, Estimate};
pub use kl::{expected_kl_tau_prior, kl_lower, kl_lower_given, kl_upper, kl_upper_given};
pub use marginal::{
    jackknife_given, jackknife_joint, jackknife_u, log_weights, lower_bound_given, lower_bound_l, omega_log_density,
    omega_reorder, omega_sample, omega_selection, sharot_coeff, subset_average_u, upper_bound_given,
    upper_bound_joint, upper_bound_u,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid bound configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Iwhvi,
    Diwhvi,
    Sivi,
    SiviReused,
    SiviLike,
    SiviEquicomp,
    SiviEquisample,
    DiwhviEval,
    Hvm,
    Dsivi,
    Elbo,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Self::Iwhvi,
        Self::Diwhvi,
        Self::Sivi,
        Self::SiviReused,
        Self::SiviLike,
        Self::SiviEquicomp,
        Self::SiviEquisample,
        Self::DiwhviEval,
        Self::Hvm,
        Self::Dsivi,
        Self::Elbo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Iwhvi => "iwhvi",
            Self::Diwhvi => "diwhvi",
            Self::Sivi => "sivi",
            Self::SiviReused => "sivi_reused",
            Self::SiviLike => "sivi_like",
            Self::SiviEquicomp => "sivi_equicomp",
            Self::SiviEquisample => "sivi_equisample",
            Self::DiwhviEval => "diwhvi_eval",
            Self::Hvm => "hvm",
            Self::Dsivi => "dsivi",
            Self::Elbo => "elbo",
        }
    }

    /// Variants that replace `τ` with `q(ψ)`.
    pub fn uses_prior_tau(self) -> bool {
        matches!(
            self,
            Self::Sivi | Self::SiviReused | Self::SiviLike | Self::SiviEquicomp | Self::SiviEquisample | Self::Dsivi
        )
    }
}

impl std::str::FromStr for Variant {
    type Err = BoundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| BoundError::InvalidConfig(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConfig {
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub variant: Variant,
    pub jackknife_order: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            m: 1,
            k: 0,
            l: 1,
            variant: Variant::Iwhvi,
            jackknife_order: 0,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<(), BoundError> {
        let bad = |msg: String| Err(BoundError::InvalidConfig(msg));
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if self.l == 0 {
            return bad("L must be at least 1".into());
        }
        if self.jackknife_order > self.k {
            return bad(format!("jackknife order {} exceeds K = {}", self.jackknife_order, self.k));
        }
        match self.variant {
            Variant::Iwhvi | Variant::Sivi | Variant::Dsivi | Variant::Elbo if self.m != 1 => {
                bad(format!("{} is a single-sample bound (M = 1), got M = {}", self.variant.name(), self.m))
            }
            Variant::Hvm if self.k != 0 => bad(format!("hvm means K = 0, got K = {}", self.k)),
            _ => Ok(()),
        }
    }
}
