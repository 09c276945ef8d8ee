//! Exact-expectation properties of the estimators on random finite models.

use hvi::bounds::{
    diwhvi_given, iwhvi_given, jackknife_given, kl_lower_given, kl_upper_given, omega_log_density, reused_given,
    sharot_coeff,
};
use hvi::models::{DiscreteTau, Generative, HierarchicalModel, LatentPrior, PriorAsTau};
use hvi::oracle::{
    enumerate_omega, enumerate_tuples, exact_expected_bound, exact_expected_outer, posterior_support,
    random_finite_instance, tau_support, BoundKind, FiniteInstance, FiniteSupport, OuterLayout,
};
use hvi::rng::RngStream;

const TOL: f64 = 1e-10;

fn instances(seed: u64, n: usize) -> Vec<FiniteInstance> {
    let mut rng = RngStream::new(seed);
    (0..n).map(|_| random_finite_instance(&mut rng)).collect()
}

fn log_q(inst: &FiniteInstance) -> f64 {
    inst.q.exact_log_marginal(&[inst.z as f64]).unwrap()
}

#[test]
fn sandwich_and_monotonicity() {
    for inst in instances(1, 50) {
        let lq = log_q(&inst);
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let u = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Upper).unwrap();
            let l = exact_expected_bound(&inst.q, &inst.tau, inst.z, k.max(1), BoundKind::Lower).unwrap();
            assert!(l <= lq + TOL && lq <= u + TOL, "K={k}: {l} {lq} {u}");
            assert!(u <= prev + TOL, "U not monotone at K={k}");
            prev = u;
        }
    }
}

#[test]
fn upper_gap_shrinks_like_one_over_k() {
    let mut rng = RngStream::new(2);
    let mut checked = 0;
    while checked < 5 {
        let inst = random_finite_instance(&mut rng);
        if inst.q.psi_states() != 2 {
            continue;
        }
        let lq = log_q(&inst);
        let gap = |k| exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Upper).unwrap() - lq;
        assert!(gap(16) < 0.5 * gap(4), "{} vs {}", gap(16), gap(4));
        checked += 1;
    }
}

#[test]
fn jackknife_reduces_bias() {
    for inst in instances(3, 20) {
        let lq = log_q(&inst);
        for k in 3..=5 {
            let u = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Upper).unwrap();
            let j = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Jackknife(1)).unwrap();
            assert!((j - lq).abs() < (u - lq).abs(), "K={k}: |{}| vs |{}|", j - lq, u - lq);
        }
    }
}

#[test]
fn sharot_coefficients_sum_to_one() {
    for k in 0..=20 {
        for order in 0..=3.min(k) {
            let s: f64 = (0..=order).map(|j| sharot_coeff(k, order, j).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12, "K={k} J={order}: {s}");
        }
    }
}

#[test]
fn jackknife_order_zero_is_u() {
    let inst = &instances(4, 1)[0];
    let z = [inst.z as f64];
    let psis: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![0.0]];
    let u = hvi::bounds::upper_bound_given(&inst.q, &inst.tau, &z, &psis);
    let j = jackknife_given(&inst.q, &inst.tau, &z, &psis, 0).unwrap();
    assert_eq!(u.value, j.value);
}

#[test]
fn omega_marginal_matches_closed_form() {
    let mut rng = RngStream::new(5);
    let q = hvi::models::make_discrete_hvm(
        hvi::oracle::random_probs(3, &mut rng),
        (0..3).map(|_| hvi::oracle::random_probs(3, &mut rng)).collect(),
    )
    .unwrap();
    let tau = DiscreteTau::new((0..3).map(|_| hvi::oracle::random_probs(3, &mut rng)).collect()).unwrap();
    for z in 0..3 {
        for k in 1..=2 {
            let marg = enumerate_omega(&q, &tau, z, k).unwrap();
            assert_eq!(marg.len(), 3usize.pow(k as u32 + 1));
            let total: f64 = marg.values().sum();
            assert!((total - 1.0).abs() < TOL);
            for (states, p) in marg {
                let psis: Vec<Vec<f64>> = states.iter().map(|&s| vec![s as f64]).collect();
                let want = omega_log_density(&q, &tau, &[z as f64], &psis).unwrap().exp();
                assert!((p - want).abs() < TOL, "{states:?}: {p} vs {want}");
            }
        }
    }
}

fn generative<'a>(inst: &'a FiniteInstance, rho: &'a DiscreteTau, prior: &'a hvi::models::Table, hier: bool) -> Generative<'a> {
    let prior = if hier {
        LatentPrior::Hierarchical {
            model: &inst.p,
            rho,
            samples: 1,
        }
    } else {
        LatentPrior::Explicit(prior)
    };
    Generative {
        prior,
        likelihood: &inst.likelihood,
    }
}

#[test]
fn elbo_family_lower_bounds_evidence() {
    for inst in instances(6, 12) {
        let lpx = inst.log_evidence();
        let explicit = inst.explicit_prior();
        for hier in [false, true] {
            let p = generative(&inst, &inst.rho, &explicit, hier);
            let l = hier as usize;
            for k in 0..=2 {
                let layout = OuterLayout { m: 1, k, l, pool: 0 };
                let v = exact_expected_outer(&inst, &inst.tau, layout, &|d, _| iwhvi_given(&p, &inst.q, &inst.tau, &d[0]).value)
                    .unwrap();
                assert!(v <= lpx + TOL, "iwhvi K={k}: {v} > {lpx}");
            }
            let k = 1;
            let mut prev = f64::NEG_INFINITY;
            // 4^(M(2+K+L)) tuples: keep M ≤ 2 when ζ is enumerated too
            for m in 1..=(3 - l) {
                let layout = OuterLayout { m, k, l, pool: 0 };
                let v = exact_expected_outer(&inst, &inst.tau, layout, &|d, _| diwhvi_given(&p, &inst.q, &inst.tau, d).value)
                    .unwrap();
                assert!(v <= lpx + TOL && v >= prev - TOL, "diwhvi M={m}: {v}, prev {prev}, log p(x) {lpx}");
                prev = v;
            }
        }
    }
}

#[test]
fn sample_reuse_and_eval_variants_are_lower_bounds() {
    for inst in instances(7, 10) {
        let lpx = inst.log_evidence();
        let explicit = inst.explicit_prior();
        let p = generative(&inst, &inst.rho, &explicit, false);
        let prior_tau = DiscreteTau::from_prior(&inst.q);
        for (m, k) in [(2, 2), (1, 3), (3, 1)] {
            let equicomp = exact_expected_outer(&inst, &prior_tau, OuterLayout { m, k: 0, l: 0, pool: k }, &|d, pool| {
                reused_given(&p, &inst.q, d, pool).value
            })
            .unwrap();
            assert!(equicomp <= lpx + TOL, "equicomp M={m} K={k}");
            if m * (m * k + 1) <= 12 {
                let equisample =
                    exact_expected_outer(&inst, &prior_tau, OuterLayout { m, k: 0, l: 0, pool: m * k }, &|d, pool| {
                        reused_given(&p, &inst.q, d, pool).value
                    })
                    .unwrap();
                assert!(equisample <= lpx + TOL, "equisample M={m} K={k}");
            }
            let like = exact_expected_outer(&inst, &prior_tau, OuterLayout { m, k, l: 0, pool: 0 }, &|d, _| {
                diwhvi_given(&p, &inst.q, &PriorAsTau(&inst.q), d).value
            })
            .unwrap();
            assert!(like <= lpx + TOL, "sivi-like M={m} K={k}");
        }
    }
}

fn true_kl(inst: &FiniteInstance) -> f64 {
    let qz = inst.q.z_marginal();
    let pz = inst.p.z_marginal();
    qz.iter().zip(&pz).map(|(a, b)| a * (a / b).ln()).sum()
}

#[test]
fn kl_sandwich_by_enumeration() {
    for inst in instances(8, 15) {
        let kl = true_kl(&inst);
        let prior = LatentPrior::Hierarchical {
            model: &inst.p,
            rho: &inst.rho,
            samples: 2,
        };
        for (k, l) in [(1, 1), (2, 2), (3, 1), (1, 3)] {
            let upper = exact_expected_outer(&inst, &inst.tau, OuterLayout { m: 1, k, l, pool: 0 }, &|d, _| {
                kl_upper_given(&inst.q, &inst.tau, prior, &d[0].z, &d[0].psis, &d[0].zetas).value
            })
            .unwrap();
            // ψ₀ (discarded), z, ψ_{1:K} ~ τ, ζ₀ ~ p(ζ | z), ζ_{1:L} ~ ρ
            let prior_psi = FiniteSupport::from_probs(inst.q.psi_probs());
            let mut dist = |pre: &[Vec<f64>]| match pre.len() {
                0 => prior_psi.clone(),
                1 => FiniteSupport::from_probs(inst.q.z_given_psi(pre[0][0] as usize)),
                i => {
                    let z = pre[1][0] as usize;
                    if i < 2 + k {
                        tau_support(&inst.tau, z)
                    } else if i == 2 + k {
                        posterior_support(&inst.p, z)
                    } else {
                        tau_support(&inst.rho, z)
                    }
                }
            };
            let mut lower = 0.0;
            enumerate_tuples(3 + k + l, 1 << 20, &mut dist, &mut |t, p| {
                lower += p * kl_lower_given(&inst.q, &inst.tau, prior, &t[1], &t[2..2 + k], &t[2 + k..]).unwrap().value;
            })
            .unwrap();
            assert!(lower <= kl + TOL && kl <= upper + TOL, "K={k} L={l}: {lower} <= {kl} <= {upper}");
        }
    }
}

#[test]
fn bounds_collapse_under_exact_inverse() {
    for inst in instances(9, 10) {
        let post = DiscreteTau::posterior(&inst.q);
        let lq = log_q(&inst);
        for k in 0..=3 {
            let u = exact_expected_bound(&inst.q, &post, inst.z, k, BoundKind::Upper).unwrap();
            assert!((u - lq).abs() < 1e-12);
        }
    }
}
