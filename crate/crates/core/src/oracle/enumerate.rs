use super::OracleError;
use crate::bounds::{jackknife_given, lower_bound_given, omega_reorder, omega_selection, upper_bound_given};
use crate::models::{make_discrete_hvm, DiscreteHvm, DiscreteTau, Table};
use crate::rng::RngStream;
use std::collections::BTreeMap;

const BUDGET: u128 = 1_000_000;

/// A finite distribution over points (states encoded as `[s as f64]` for
/// the discrete models).
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSupport {
    pub points: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl FiniteSupport {
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, OracleError> {
        if points.len() != probs.len() {
            return Err(OracleError::Support(format!("{} points but {} probabilities", points.len(), probs.len())));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || probs.iter().any(|p| *p < 0.0) {
            return Err(OracleError::Support(format!("probabilities sum to {sum}")));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(OracleError::Support(format!("duplicate point {p:?}")));
            }
        }
        Ok(Self { points, probs })
    }

    /// States `0..n` with the given probabilities; zero-probability states
    /// are dropped since they never occur.
    pub fn from_probs(probs: &[f64]) -> Self {
        let (points, probs) = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (vec![i as f64], p))
            .unzip();
        Self { points, probs }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn posterior_support(model: &DiscreteHvm, z: usize) -> FiniteSupport {
    FiniteSupport::from_probs(&model.posterior(z))
}

pub fn tau_support(tau: &DiscreteTau, z: usize) -> FiniteSupport {
    FiniteSupport::from_probs(tau.probs(z))
}

/// Visits every tuple of `steps` draws where draw `i` follows
/// `dist(prefix)`, passing the tuple and its probability. Returns the number
/// of tuples visited; stops with an error once `budget` is exceeded.
pub fn enumerate_tuples(
    steps: usize,
    budget: u128,
    dist: &mut dyn FnMut(&[Vec<f64>]) -> FiniteSupport,
    visit: &mut dyn FnMut(&[Vec<f64>], f64),
) -> Result<u128, OracleError> {
    fn rec(
        prefix: &mut Vec<Vec<f64>>,
        prob: f64,
        steps: usize,
        budget: u128,
        count: &mut u128,
        dist: &mut dyn FnMut(&[Vec<f64>]) -> FiniteSupport,
        visit: &mut dyn FnMut(&[Vec<f64>], f64),
    ) -> Result<(), OracleError> {
        if prefix.len() == steps {
            *count += 1;
            if *count > budget {
                return Err(OracleError::Budget { required: *count, budget });
            }
            visit(prefix, prob);
            return Ok(());
        }
        let support = dist(prefix);
        for (point, p) in support.points.into_iter().zip(support.probs) {
            prefix.push(point);
            rec(prefix, prob * p, steps, budget, count, dist, visit)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut count = 0;
    rec(&mut Vec::with_capacity(steps), 1.0, steps, budget, &mut count, dist, visit)?;
    Ok(count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    /// `U_K` with `ψ₀` from the exact inverse.
    Upper,
    /// `L_K`, `K ≥ 1`.
    Lower,
    /// Order-`J` jackknife of `U_K`.
    Jackknife(usize),
}

/// Exact `E[bound]` at a fixed `z` by summing over every `ψ` tuple.
pub fn exact_expected_bound(
    model: &DiscreteHvm,
    tau: &DiscreteTau,
    z: usize,
    k: usize,
    kind: BoundKind,
) -> Result<f64, OracleError> {
    let with_psi0 = kind != BoundKind::Lower;
    let steps = k + with_psi0 as usize;
    let required = (model.psi_states() as u128).pow(steps as u32);
    if required > BUDGET {
        return Err(OracleError::Budget { required, budget: BUDGET });
    }
    if let BoundKind::Jackknife(order) = kind {
        crate::bounds::sharot_coeff(k, order, 0)?;
    }
    let zv = [z as f64];
    let post = posterior_support(model, z);
    let tau_s = tau_support(tau, z);
    let mut dist = |prefix: &[Vec<f64>]| {
        if with_psi0 && prefix.is_empty() {
            post.clone()
        } else {
            tau_s.clone()
        }
    };
    let mut total = 0.0;
    let mut err = None;
    let mut visit = |psis: &[Vec<f64>], p: f64| {
        let v = match kind {
            BoundKind::Upper => Ok(upper_bound_given(model, tau, &zv, psis).value),
            BoundKind::Lower => lower_bound_given(model, tau, &zv, psis).map(|e| e.value),
            BoundKind::Jackknife(order) => jackknife_given(model, tau, &zv, psis, order).map(|e| e.value),
        };
        match v {
            Ok(v) => total += p * v,
            Err(e) => err = Some(e),
        }
    };
    enumerate_tuples(steps, BUDGET, &mut dist, &mut visit)?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(total),
    }
}

/// Exact distribution of the resampling sampler's output `ψ_{0:K}` at `z`,
/// keyed by state tuple: every `K+1` draw tuple from `τ`, times every
/// selection `h`.
pub fn enumerate_omega(
    model: &DiscreteHvm,
    tau: &DiscreteTau,
    z: usize,
    k: usize,
) -> Result<BTreeMap<Vec<usize>, f64>, OracleError> {
    let zv = [z as f64];
    let tau_s = tau_support(tau, z);
    let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut visit = |draws: &[Vec<f64>], p: f64| {
        let sel = omega_selection(model, tau, &zv, draws);
        for (h, w) in sel.into_iter().enumerate() {
            let key = omega_reorder(draws, h).iter().map(|v| v[0] as usize).collect();
            *out.entry(key).or_default() += p * w;
        }
    };
    enumerate_tuples(k + 1, BUDGET, &mut |_| tau_s.clone(), &mut visit)?;
    Ok(out)
}

/// Symmetric Dirichlet(1) draw of length `n`, floored at 0.01 and
/// renormalized.
pub fn random_probs(n: usize, rng: &mut RngStream) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.uniform().ln()).collect();
    let s: f64 = raw.iter().sum();
    let floored: Vec<f64> = raw.iter().map(|v| (v / s).max(0.01)).collect();
    let s: f64 = floored.iter().sum();
    let mut out: Vec<f64> = floored.iter().map(|v| v / s).collect();
    // put the rounding residue on the largest entry so the sum is exact to 1e-15
    let resid = 1.0 - out.iter().sum::<f64>();
    let imax = (0..n).max_by(|&a, &b| out[a].total_cmp(&out[b])).unwrap_or(0);
    out[imax] += resid;
    out
}

/// A random finite test problem: `q(z, ψ)` with a mismatched `τ`, a
/// hierarchical `p(z, ζ)` sharing `z`'s states with its own `ρ`, a
/// likelihood table `p(x | z)` for one fixed `x`, and an observed `z`.
#[derive(Clone, Debug)]
pub struct FiniteInstance {
    pub q: DiscreteHvm,
    pub tau: DiscreteTau,
    pub p: DiscreteHvm,
    pub rho: DiscreteTau,
    pub likelihood: Table,
    pub z: usize,
}

/// Support sizes 2–4 for `ψ`, `z` and `ζ`.
pub fn random_finite_instance(rng: &mut RngStream) -> FiniteInstance {
    let size = |rng: &mut RngStream| 2 + (rng.next_u64() % 3) as usize;
    let (n_psi, n_z, n_zeta) = (size(rng), size(rng), size(rng));
    let table = |rows: usize, cols: usize, rng: &mut RngStream| -> Vec<Vec<f64>> {
        (0..rows).map(|_| random_probs(cols, rng)).collect()
    };
    let q = make_discrete_hvm(random_probs(n_psi, rng), table(n_psi, n_z, rng)).expect("valid probabilities");
    let tau = DiscreteTau::new(table(n_z, n_psi, rng)).expect("valid probabilities");
    let p = make_discrete_hvm(random_probs(n_zeta, rng), table(n_zeta, n_z, rng)).expect("valid probabilities");
    let rho = DiscreteTau::new(table(n_z, n_zeta, rng)).expect("valid probabilities");
    let likelihood = Table((0..n_z).map(|_| 0.05 + 0.95 * rng.uniform()).collect());
    let z = (rng.next_u64() % n_z as u64) as usize;
    FiniteInstance { q, tau, p, rho, likelihood, z }
}


/// Shape of an ELBO-family draw for [`exact_expected_outer`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OuterLayout {
    /// Outer samples `M`.
    pub m: usize,
    /// `τ` draws per outer sample.
    pub k: usize,
    /// `ρ` draws per outer sample (0 for an explicit prior).
    pub l: usize,
    /// Shared `q(ψ)` draws after all outer samples (sample reuse).
    pub pool: usize,
}

impl FiniteInstance {
    /// `log p(x) = log Σ_z p(z) p(x | z)`.
    pub fn log_evidence(&self) -> f64 {
        self.p
            .z_marginal()
            .iter()
            .zip(&self.likelihood.0)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .ln()
    }

    /// The marginal `p(z)` as an explicit prior table.
    pub fn explicit_prior(&self) -> Table {
        Table(self.p.z_marginal())
    }
}

/// Exact expectation of `f(draws, pool)` over the ELBO-family sampling
/// process of `inst` in canonical order: per outer sample `ψ₀ ~ q(ψ)`,
/// `z ~ q(z | ψ₀)`, `ψ_{1:K} ~ tau`, `ζ_{1:L} ~ ρ`, then the pool.
pub fn exact_expected_outer(
    inst: &FiniteInstance,
    tau: &DiscreteTau,
    layout: OuterLayout,
    f: &dyn Fn(&[crate::bounds::OuterDraw], &[Vec<f64>]) -> f64,
) -> Result<f64, OracleError> {
    let OuterLayout { m, k, l, pool } = layout;
    let block = 2 + k + l;
    let steps = m * block + pool;
    let prior_psi = FiniteSupport::from_probs(inst.q.psi_probs());
    let mut dist = |prefix: &[Vec<f64>]| {
        let i = prefix.len();
        if i >= m * block {
            return prior_psi.clone();
        }
        let (start, pos) = (i - i % block, i % block);
        match pos {
            0 => prior_psi.clone(),
            1 => FiniteSupport::from_probs(inst.q.z_given_psi(prefix[start][0] as usize)),
            _ => {
                let z = prefix[start + 1][0] as usize;
                if pos < 2 + k {
                    tau_support(tau, z)
                } else {
                    tau_support(&inst.rho, z)
                }
            }
        }
    };
    let mut total = 0.0;
    let mut visit = |t: &[Vec<f64>], p: f64| {
        let draws: Vec<crate::bounds::OuterDraw> = (0..m)
            .map(|j| {
                let b = &t[j * block..(j + 1) * block];
                let mut psis = vec![b[0].clone()];
                psis.extend_from_slice(&b[2..2 + k]);
                crate::bounds::OuterDraw {
                    z: b[1].clone(),
                    psis,
                    zetas: b[2 + k..].to_vec(),
                }
            })
            .collect();
        total += p * f(&draws, &t[m * block..]);
    };
    enumerate_tuples(steps, BUDGET, &mut dist, &mut visit)?;
    Ok(total)
}
