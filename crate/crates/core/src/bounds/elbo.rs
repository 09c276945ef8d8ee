use super::marginal::log_weights;
use super::{log_mean_exp, BoundConfig, BoundError, Estimate, Variant};
use crate::models::{
    AuxiliaryInference, Component, FactorizedModel, Generative, HierarchicalModel, LatentPrior, PriorAsTau,
};
use crate::rng::RngStream;

/// One outer sample of the ELBO family: `z`, its `ψ_{0:K}` (`ψ₀` first) and
/// the prior's `ζ_{1:L}` (empty for explicit priors).
#[derive(Clone, Debug, PartialEq)]
pub struct OuterDraw {
    pub z: Vec<f64>,
    pub psis: Vec<Vec<f64>>,
    pub zetas: Vec<Vec<f64>>,
}

pub(crate) fn draw_zetas(prior: LatentPrior, z: &[f64], rng: &mut RngStream) -> Vec<Vec<f64>> {
    match prior {
        LatentPrior::Explicit(_) => Vec::new(),
        LatentPrior::Hierarchical { rho, samples, .. } => (0..samples).map(|_| rho.sample(z, rng)).collect(),
    }
}

/// `log p(z)` for explicit priors, otherwise the `L`-sample lower estimate
/// `log (1/L) Σ_l p(z, ζ_l) / ρ(ζ_l | z)`.
pub fn log_prior_given(prior: LatentPrior, z: &[f64], zetas: &[Vec<f64>]) -> f64 {
    match prior {
        LatentPrior::Explicit(d) => d.log_prob(z),
        LatentPrior::Hierarchical { model, rho, .. } => log_mean_exp(&log_weights(model, rho, z, zetas)),
    }
}

/// Draws one outer sample in the canonical order.
pub fn draw_outer(
    p: &Generative,
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    k: usize,
    rng: &mut RngStream,
) -> OuterDraw {
    let (z, psi0) = q.sample_joint(rng);
    let mut psis = Vec::with_capacity(k + 1);
    psis.push(psi0);
    psis.extend((0..k).map(|_| tau.sample(&z, rng)));
    let zetas = draw_zetas(p.prior, &z, rng);
    OuterDraw { z, psis, zetas }
}

fn outer_log_ratio(p: &Generative, q: &dyn HierarchicalModel, tau: &dyn AuxiliaryInference, d: &OuterDraw) -> (f64, Vec<f64>) {
    let lw = log_weights(q, tau, &d.z, &d.psis);
    let value = p.likelihood.log_likelihood(&d.z) + log_prior_given(p.prior, &d.z, &d.zetas) - log_mean_exp(&lw);
    (value, lw)
}

/// IWHVI lower bound on `log p(x)` from one outer draw. The returned
/// log-weights are the `K+1` terms of the `log q(z)` upper estimate.
pub fn iwhvi_given(p: &Generative, q: &dyn HierarchicalModel, tau: &dyn AuxiliaryInference, d: &OuterDraw) -> Estimate {
    let (value, lw) = outer_log_ratio(p, q, tau, d);
    let n = lw.len();
    Estimate::with_value(value, lw, n)
}

/// DIWHVI: log-mean-exp over `M` independent outer ratios. The returned
/// log-weights are the `M` outer ratios.
pub fn diwhvi_given(p: &Generative, q: &dyn HierarchicalModel, tau: &dyn AuxiliaryInference, draws: &[OuterDraw]) -> Estimate {
    let evals = draws.iter().map(|d| d.psis.len()).sum();
    let ratios = draws.iter().map(|d| outer_log_ratio(p, q, tau, d).0).collect();
    Estimate::from_log_weights(ratios, evals)
}

pub fn iwhvi_elbo(
    p: &Generative,
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    k: usize,
    rng: &mut RngStream,
) -> (Vec<f64>, Estimate) {
    let d = draw_outer(p, q, tau, k, rng);
    let est = iwhvi_given(p, q, tau, &d);
    (d.z, est)
}

pub fn diwhvi_elbo(
    p: &Generative,
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    m: usize,
    k: usize,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    if m == 0 {
        return Err(BoundError::InvalidConfig("M must be at least 1".into()));
    }
    let draws: Vec<OuterDraw> = (0..m).map(|_| draw_outer(p, q, tau, k, rng)).collect();
    Ok(diwhvi_given(p, q, tau, &draws))
}

/// SIVI: IWHVI with `τ := q(ψ)`.
pub fn sivi_elbo(p: &Generative, q: &dyn HierarchicalModel, k: usize, rng: &mut RngStream) -> (Vec<f64>, Estimate) {
    iwhvi_elbo(p, q, &PriorAsTau(q), k, rng)
}

/// HVM: IWHVI with `K = 0`.
pub fn hvm_elbo(
    p: &Generative,
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    rng: &mut RngStream,
) -> (Vec<f64>, Estimate) {
    iwhvi_elbo(p, q, tau, 0, rng)
}

/// DSIVI: `τ := q(ψ)` and, for hierarchical priors, `ρ := p(ζ)`.
pub fn dsivi_elbo(p: &Generative, q: &dyn HierarchicalModel, k: usize, rng: &mut RngStream) -> (Vec<f64>, Estimate) {
    match p.prior {
        LatentPrior::Hierarchical { model, samples, .. } => {
            let rho = PriorAsTau(model);
            let p2 = Generative {
                prior: LatentPrior::Hierarchical { model, rho: &rho, samples },
                likelihood: p.likelihood,
            };
            sivi_elbo(&p2, q, k, rng)
        }
        LatentPrior::Explicit(_) => sivi_elbo(p, q, k, rng),
    }
}

/// Plain ELBO `log p(x, z) - log q(z)` for a factorized `q`. `(z, ψ)` is
/// drawn jointly and `ψ` discarded, so the stream matches the IWHVI draw.
pub fn elbo<Z: Component, P: Component>(
    p: &Generative,
    q: &FactorizedModel<Z, P>,
    rng: &mut RngStream,
) -> (Vec<f64>, Estimate) {
    let (z, _) = q.sample_joint(rng);
    let zetas = draw_zetas(p.prior, &z, rng);
    let lq = q.z.log_prob(&z);
    let value = p.likelihood.log_likelihood(&z) + log_prior_given(p.prior, &z, &zetas) - lq;
    (z, Estimate::with_value(value, vec![lq], 1))
}

/// Sample-reusing SIVI: each `z_m` keeps its own `ψ_{m,0}` and shares the
/// pool `ψ_{1:K} ~ q(ψ)` in the denominator. `draws[m].psis` holds only
/// `ψ_{m,0}`.
pub fn reused_given(p: &Generative, q: &dyn HierarchicalModel, draws: &[OuterDraw], pool: &[Vec<f64>]) -> Estimate {
    let tau = PriorAsTau(q);
    let mut ratios = Vec::with_capacity(draws.len());
    let mut evals = 0;
    let mut psis = Vec::with_capacity(pool.len() + 1);
    for d in draws {
        psis.clear();
        psis.push(d.psis[0].clone());
        psis.extend_from_slice(pool);
        evals += psis.len();
        let lw = log_weights(q, &tau, &d.z, &psis);
        ratios.push(p.likelihood.log_likelihood(&d.z) + log_prior_given(p.prior, &d.z, &d.zetas) - log_mean_exp(&lw));
    }
    Estimate::from_log_weights(ratios, evals)
}

/// Draws `(ψ_{m,0}, z_m, ζ_m)` for every `m`, then a shared pool of `pool`
/// prior draws.
fn draw_reused(
    p: &Generative,
    q: &dyn HierarchicalModel,
    m: usize,
    pool: usize,
    rng: &mut RngStream,
) -> (Vec<OuterDraw>, Vec<Vec<f64>>) {
    let draws = (0..m).map(|_| draw_outer(p, q, &PriorAsTau(q), 0, rng)).collect();
    let pool = (0..pool).map(|_| q.sample_psi(rng)).collect();
    (draws, pool)
}

/// Multisample SIVI with `ψ_{1:K}` drawn once and shared by all `z_m`.
pub fn sivi_reused(
    p: &Generative,
    q: &dyn HierarchicalModel,
    m: usize,
    k: usize,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    if m == 0 {
        return Err(BoundError::InvalidConfig("M must be at least 1".into()));
    }
    let (draws, pool) = draw_reused(p, q, m, k, rng);
    Ok(reused_given(p, q, &draws, &pool))
}

/// Evaluates `config.variant`. `Elbo` is IWHVI with `τ := q(ψ)` and `K = 0`,
/// which is the exact ELBO when `q` factorizes.
pub fn eval_variant(
    config: &BoundConfig,
    p: &Generative,
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    config.validate()?;
    let BoundConfig { m, k, .. } = *config;
    let prior_tau = PriorAsTau(q);
    Ok(match config.variant {
        Variant::Iwhvi => iwhvi_elbo(p, q, tau, k, rng).1,
        Variant::Hvm => hvm_elbo(p, q, tau, rng).1,
        Variant::Sivi => sivi_elbo(p, q, k, rng).1,
        Variant::Dsivi => dsivi_elbo(p, q, k, rng).1,
        Variant::Elbo => iwhvi_elbo(p, q, &prior_tau, 0, rng).1,
        Variant::Diwhvi | Variant::DiwhviEval => diwhvi_elbo(p, q, tau, m, k, rng)?,
        Variant::SiviLike => diwhvi_elbo(p, q, &prior_tau, m, k, rng)?,
        Variant::SiviReused | Variant::SiviEquicomp => sivi_reused(p, q, m, k, rng)?,
        Variant::SiviEquisample => {
            let (draws, pool) = draw_reused(p, q, m, m * k, rng);
            reused_given(p, q, &draws, &pool)
        }
    })
}
