use super::elbo::{draw_zetas, log_prior_given};
use super::marginal::log_weights;
use super::{log_mean_exp, BoundError, Estimate};
use crate::models::{AuxiliaryInference, HierarchicalModel, LatentPrior};
use crate::rng::RngStream;

/// Upper bound on `KL(q(z) ‖ p(z))` from given draws: `psis` is `ψ_{0:K}`
/// with `ψ₀` from the joint, `zetas` is `ζ_{1:L} ~ ρ` (ignored for explicit
/// priors).
pub fn kl_upper_given(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    prior: LatentPrior,
    z: &[f64],
    psis: &[Vec<f64>],
    zetas: &[Vec<f64>],
) -> Estimate {
    let lw = log_weights(q, tau, z, psis);
    let value = log_mean_exp(&lw) - log_prior_given(prior, z, zetas);
    let n = lw.len();
    Estimate::with_value(value, lw, n)
}

pub fn kl_upper(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    prior: LatentPrior,
    k: usize,
    rng: &mut RngStream,
) -> Estimate {
    let (z, psi0) = q.sample_joint(rng);
    let mut psis = vec![psi0];
    psis.extend((0..k).map(|_| tau.sample(&z, rng)));
    let zetas = draw_zetas(prior, &z, rng);
    kl_upper_given(q, tau, prior, &z, &psis, &zetas)
}

/// Lower bound on the KL from given draws: `psis` is `ψ_{1:K} ~ τ` (no
/// `ψ₀`), `zetas` is `ζ_{0:L}` with `ζ₀` from the exact inverse `p(ζ | z)`.
pub fn kl_lower_given(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    prior: LatentPrior,
    z: &[f64],
    psis: &[Vec<f64>],
    zetas: &[Vec<f64>],
) -> Result<Estimate, BoundError> {
    if psis.is_empty() {
        return Err(BoundError::InvalidConfig("the KL lower bound needs K >= 1".into()));
    }
    let lw = log_weights(q, tau, z, psis);
    let value = log_mean_exp(&lw) - log_prior_given(prior, z, zetas);
    let n = lw.len();
    Ok(Estimate::with_value(value, lw, n))
}

/// Needs exact inverse sampling from a hierarchical prior; explicit priors
/// need none.
pub fn kl_lower(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    prior: LatentPrior,
    k: usize,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    if k == 0 {
        return Err(BoundError::InvalidConfig("the KL lower bound needs K >= 1".into()));
    }
    let (z, _) = q.sample_joint(rng);
    let psis: Vec<Vec<f64>> = (0..k).map(|_| tau.sample(&z, rng)).collect();
    let zetas = match prior {
        LatentPrior::Explicit(_) => Vec::new(),
        LatentPrior::Hierarchical { model, .. } => {
            let zeta0 = model
                .sample_exact_posterior(&z, rng)
                .ok_or(BoundError::Unsupported("the KL lower bound needs exact sampling from p(ζ | z)"))?;
            let mut zetas = vec![zeta0];
            zetas.extend(draw_zetas(prior, &z, rng));
            zetas
        }
    };
    kl_lower_given(q, tau, prior, &z, &psis, &zetas)
}

/// Monte Carlo `E_{q(z)} KL(τ(ψ | z) ‖ q(ψ))`, one `ψ` per `z`. Values near
/// zero indicate that `τ` has collapsed onto the prior.
pub fn expected_kl_tau_prior(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    n_samples: usize,
    rng: &mut RngStream,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..n_samples {
        let (z, _) = q.sample_joint(rng);
        let psi = tau.sample(&z, rng);
        total += tau.log_prob(&psi, &z) - q.log_psi_prior(&psi);
    }
    total / n_samples as f64
}
