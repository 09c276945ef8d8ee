//! Exact studies on random finite models: the sandwich and monotonicity of
//! `L_K ≤ log q(z) ≤ U_K`, and the bias reduction of the jackknife.

use super::record::RunRecord;
use super::{ExperimentConfig, ExperimentError};
use crate::bounds::sharot_coeff;
use crate::models::HierarchicalModel;
use crate::oracle::{exact_expected_bound, random_finite_instance, BoundKind, FiniteInstance, OracleError};
use crate::rng::RngStream;

impl From<OracleError> for ExperimentError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Budget { .. } => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

/// Instance `i` of a study: independent of how many instances run.
pub fn finite_instance(seed: u64, i: usize) -> FiniteInstance {
    random_finite_instance(&mut RngStream::derive(seed, i as u64))
}

fn log_q(inst: &FiniteInstance) -> Result<f64, ExperimentError> {
    inst.q
        .exact_log_marginal(&[inst.z as f64])
        .ok_or_else(|| ExperimentError::Numerical("finite model without an exact marginal".into()))
}

/// Exact `E[L_K]`, `log q(z)` and `E[U_K]` per instance and K, plus the
/// largest violations of the sandwich and of `E[U_K] ≥ E[U_{K+1}]`
/// (non-positive when the ordering holds).
pub fn run_bounds_check(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    const NAME: &str = "bounds-check";
    let ks = cfg.ks();
    let mut out = Vec::new();
    let mut sandwich: f64 = f64::NEG_INFINITY;
    let mut monotone: f64 = f64::NEG_INFINITY;
    for i in 0..cfg.instances {
        let inst = finite_instance(cfg.seed, i);
        let lq = log_q(&inst)?;
        let row = |k: usize, metric: &str, v: f64| RunRecord::new(NAME, cfg.seed, i, k, 1, "exact", metric, v);
        out.push(row(0, "log_q", lq));
        let mut prev_upper = None;
        for &k in &ks {
            let upper = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Upper)?;
            out.push(row(k, "upper", upper));
            sandwich = sandwich.max(lq - upper);
            if k >= 1 {
                let lower = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Lower)?;
                out.push(row(k, "lower", lower));
                sandwich = sandwich.max(lower - lq);
            }
            if let Some((pk, pu)) = prev_upper {
                if pk < k {
                    monotone = monotone.max(upper - pu);
                }
            }
            prev_upper = Some((k, upper));
        }
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let summary = |metric: &str, v: f64| RunRecord::new(NAME, cfg.seed, cfg.instances, k_max, 1, "exact", metric, v);
    out.push(summary("max_sandwich_violation", sandwich));
    out.push(summary("max_monotone_violation", monotone));
    Ok(out)
}

/// Largest `|Σ_j c(K, J, j) - 1|` over `K ≤ k_max`, `1 ≤ J ≤ j_max`, `J ≤ K`.
pub fn coeff_sum_error(k_max: usize, j_max: usize) -> Result<f64, ExperimentError> {
    let mut worst: f64 = 0.0;
    for k in 0..=k_max {
        for order in 1..=j_max.min(k) {
            let s = (0..=order).map(|j| sharot_coeff(k, order, j)).sum::<Result<f64, _>>()?;
            worst = worst.max((s - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Exact absolute biases of `U_K` and of its order-`J` jackknife per
/// instance and K, their means, and the coefficient-sum check.
pub fn run_jackknife_study(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    const NAME: &str = "jackknife-study";
    let order = cfg.j;
    let ks: Vec<usize> = cfg.ks().into_iter().filter(|&k| k >= order).collect();
    if ks.is_empty() {
        return Err(ExperimentError::Config(format!("the jackknife of order {order} needs some K >= {order}")));
    }
    let est = format!("jackknife{order}");
    let mut out = Vec::new();
    let mut sums = vec![(0.0, 0.0, 0usize); ks.len()];
    for i in 0..cfg.instances {
        let inst = finite_instance(cfg.seed, i);
        let lq = log_q(&inst)?;
        for (s, &k) in sums.iter_mut().zip(&ks) {
            let upper = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Upper)?;
            let jack = exact_expected_bound(&inst.q, &inst.tau, inst.z, k, BoundKind::Jackknife(order))?;
            let (bu, bj) = ((upper - lq).abs(), (jack - lq).abs());
            out.push(RunRecord::new(NAME, cfg.seed, i, k, 1, "upper", "abs_bias", bu));
            out.push(RunRecord::new(NAME, cfg.seed, i, k, 1, &est, "abs_bias", bj));
            s.0 += bu;
            s.1 += bj;
            s.2 += usize::from(bj < bu);
        }
    }
    let n = cfg.instances.max(1) as f64;
    for (&(su, sj, wins), &k) in sums.iter().zip(&ks) {
        let row = |e: &str, metric: &str, v: f64| RunRecord::new(NAME, cfg.seed, cfg.instances, k, 1, e, metric, v);
        out.push(row("upper", "mean_abs_bias", su / n));
        out.push(row(&est, "mean_abs_bias", sj / n));
        out.push(row(&est, "win_fraction", wins as f64 / n));
    }
    out.push(RunRecord::new(
        NAME,
        cfg.seed,
        0,
        20,
        1,
        "sharot",
        "max_coeff_sum_error",
        coeff_sum_error(20, 3)?,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Experiment;

    fn cfg(e: Experiment) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(e);
        c.instances = 5;
        c
    }

    #[test]
    fn bounds_check_orders_hold() {
        let out = run_bounds_check(&cfg(Experiment::BoundsCheck)).unwrap();
        for m in ["max_sandwich_violation", "max_monotone_violation"] {
            let r = out.iter().find(|r| r.metric == m).unwrap();
            assert!(r.value <= 1e-10, "{m}: {}", r.value);
        }
    }

    #[test]
    fn coefficients_sum_to_one() {
        assert!(coeff_sum_error(20, 3).unwrap() < 1e-12);
    }

    #[test]
    fn jackknife_rejects_small_k() {
        let mut c = cfg(Experiment::JackknifeStudy);
        c.k_sweep = vec![1];
        c.j = 2;
        assert!(matches!(run_jackknife_study(&c), Err(ExperimentError::Config(_))));
    }
}
