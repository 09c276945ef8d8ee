use super::{BoundError, Estimate};
use crate::autodiff::logsumexp;
use crate::models::{AuxiliaryInference, HierarchicalModel};
use crate::rng::RngStream;

/// `log q(z, ψ) - log τ(ψ | z)` for each `ψ`.
pub fn log_weights(q: &dyn HierarchicalModel, tau: &dyn AuxiliaryInference, z: &[f64], psis: &[Vec<f64>]) -> Vec<f64> {
    psis.iter().map(|p| q.log_joint(z, p) - tau.log_prob(p, z)).collect()
}

/// `U_K` from given draws; `psis[0]` must come from `q(ψ | z)` (or jointly
/// with `z`), the rest from `τ`.
pub fn upper_bound_given(q: &dyn HierarchicalModel, tau: &dyn AuxiliaryInference, z: &[f64], psis: &[Vec<f64>]) -> Estimate {
    Estimate::from_log_weights(log_weights(q, tau, z, psis), psis.len())
}

/// `L_K` from `K ≥ 1` draws of `τ`.
pub fn lower_bound_given(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    psis: &[Vec<f64>],
) -> Result<Estimate, BoundError> {
    if psis.is_empty() {
        return Err(BoundError::InvalidConfig("the lower bound needs K >= 1".into()));
    }
    Ok(Estimate::from_log_weights(log_weights(q, tau, z, psis), psis.len()))
}

fn draw_tau(tau: &dyn AuxiliaryInference, z: &[f64], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..k).map(|_| tau.sample(z, rng)).collect()
}

/// `U_K` at a fixed `z`. `ψ₀` is drawn from the exact inverse, so the
/// model must provide one.
pub fn upper_bound_u(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    k: usize,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    let psi0 = q
        .sample_exact_posterior(z, rng)
        .ok_or(BoundError::Unsupported("U_K at a fixed z needs exact posterior sampling; use upper_bound_joint"))?;
    let mut psis = vec![psi0];
    psis.extend(draw_tau(tau, z, k, rng));
    Ok(upper_bound_given(q, tau, z, &psis))
}

/// `U_K` with `(z, ψ₀)` drawn jointly from `q`; returns the `z` used.
pub fn upper_bound_joint(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    k: usize,
    rng: &mut RngStream,
) -> (Vec<f64>, Estimate) {
    let (z, psi0) = q.sample_joint(rng);
    let mut psis = vec![psi0];
    psis.extend(draw_tau(tau, &z, k, rng));
    let est = upper_bound_given(q, tau, &z, &psis);
    (z, est)
}

pub fn lower_bound_l(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    k: usize,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    if k == 0 {
        return Err(BoundError::InvalidConfig("the lower bound needs K >= 1".into()));
    }
    lower_bound_given(q, tau, z, &draw_tau(tau, z, k, rng))
}

/// Generalized jackknife coefficient `c(K, J, j) = (-1)^j (K-j)^J / ((J-j)! j!)`.
pub fn sharot_coeff(k: usize, order: usize, j: usize) -> Result<f64, BoundError> {
    if j > order || order > k {
        return Err(BoundError::InvalidConfig(format!("need j <= J <= K, got j={j}, J={order}, K={k}")));
    }
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * ((k - j) as f64).powi(order as i32) / (fact(order - j) * fact(j)))
}

/// Calls `f` with every `size`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, size: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let Some(i) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `Ū_{K-j}`: `U` averaged over every size-`(K-j)` subset of the `τ`
/// draws, each subset keeping the `ψ₀` weight `log_w[0]`.
pub fn subset_average_u(log_w: &[f64], j: usize) -> f64 {
    let k = log_w.len() - 1;
    let size = k - j;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut buf = Vec::with_capacity(size + 1);
    for_each_subset(k, size, |s| {
        buf.clear();
        buf.push(log_w[0]);
        buf.extend(s.iter().map(|&i| log_w[i + 1]));
        total += logsumexp(&buf) - ((size + 1) as f64).ln();
        count += 1;
    });
    total / count as f64
}

/// Order-`J` jackknife combination `Σ_j c(K,J,j) Ū_{K-j}` from given draws
/// (`psis[0]` is `ψ₀`). Not guaranteed to be an upper bound.
pub fn jackknife_given(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    psis: &[Vec<f64>],
    order: usize,
) -> Result<Estimate, BoundError> {
    let k = psis.len() - 1;
    let lw = log_weights(q, tau, z, psis);
    let mut value = 0.0;
    for j in 0..=order {
        value += sharot_coeff(k, order, j)? * subset_average_u(&lw, j);
    }
    Ok(Estimate::with_value(value, lw, psis.len()))
}

/// Jackknife-corrected `U_K` at a fixed `z` (exact-posterior `ψ₀`).
pub fn jackknife_u(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    k: usize,
    order: usize,
    rng: &mut RngStream,
) -> Result<Estimate, BoundError> {
    if order > k {
        return Err(BoundError::InvalidConfig(format!("jackknife order {order} exceeds K = {k}")));
    }
    let psi0 = q
        .sample_exact_posterior(z, rng)
        .ok_or(BoundError::Unsupported("jackknife at a fixed z needs exact posterior sampling"))?;
    let mut psis = vec![psi0];
    psis.extend(draw_tau(tau, z, k, rng));
    jackknife_given(q, tau, z, &psis, order)
}

/// Jackknife-corrected `U_K` with `(z, ψ₀)` drawn jointly.
pub fn jackknife_joint(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    k: usize,
    order: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Estimate), BoundError> {
    if order > k {
        return Err(BoundError::InvalidConfig(format!("jackknife order {order} exceeds K = {k}")));
    }
    let (z, psi0) = q.sample_joint(rng);
    let mut psis = vec![psi0];
    psis.extend(draw_tau(tau, &z, k, rng));
    let est = jackknife_given(q, tau, &z, &psis, order)?;
    Ok((z, est))
}

/// Selection probabilities of the resampling step: `w_k / Σ w`.
pub fn omega_selection(q: &dyn HierarchicalModel, tau: &dyn AuxiliaryInference, z: &[f64], draws: &[Vec<f64>]) -> Vec<f64> {
    let lw = log_weights(q, tau, z, draws);
    let norm = logsumexp(&lw);
    lw.iter().map(|l| (l - norm).exp()).collect()
}

/// Moves draw `h` to the front, keeping the others in order.
pub fn omega_reorder(draws: &[Vec<f64>], h: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(draws.len());
    out.push(draws[h].clone());
    out.extend(draws.iter().enumerate().filter(|&(i, _)| i != h).map(|(_, d)| d.clone()));
    out
}

/// Draws `ψ_{0:K}` from the resampling distribution whose KL gap to
/// `q(ψ₀ | z) τ(ψ_{1:K} | z)` equals the slack of `U_K`: `K+1` draws from
/// `τ`, one picked in proportion to its weight and put first.
pub fn omega_sample(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    k: usize,
    rng: &mut RngStream,
) -> Vec<Vec<f64>> {
    let draws = draw_tau(tau, z, k + 1, rng);
    let h = rng.categorical(&omega_selection(q, tau, z, &draws));
    omega_reorder(&draws, h)
}

/// Closed-form `log ω(ψ_{0:K} | z)`; needs the exact marginal of `q`.
pub fn omega_log_density(
    q: &dyn HierarchicalModel,
    tau: &dyn AuxiliaryInference,
    z: &[f64],
    psis: &[Vec<f64>],
) -> Result<f64, BoundError> {
    let lz = q
        .exact_log_marginal(z)
        .ok_or(BoundError::Unsupported("the closed-form ω density needs the exact marginal"))?;
    let post = |p: &[f64]| q.log_joint(z, p) - lz;
    let ratios: Vec<f64> = psis.iter().map(|p| post(p) - tau.log_prob(p, z)).collect();
    let denom = logsumexp(&ratios) - (psis.len() as f64).ln();
    let tau_rest: f64 = psis[1..].iter().map(|p| tau.log_prob(p, z)).sum();
    Ok(post(&psis[0]) + tau_rest - denom)
}
