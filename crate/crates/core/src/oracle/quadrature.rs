use super::OracleError;
use crate::autodiff::logsumexp;
use std::f64::consts::FRAC_PI_2;

const T_MAX: f64 = 4.5;
const MAX_LEVELS: usize = 12;
const TOL: f64 = 1e-10;

/// Tanh-sinh style rule in log-space: `log ∫ exp(f(x)) dx` with
/// `x = map(t)`, `dx = jac(t) dt`, `t ∈ [-T, T]`. Halves the step until two
/// successive estimates agree.
fn double_exponential(
    log_f: &dyn Fn(f64) -> f64,
    map: impl Fn(f64) -> (f64, f64),
) -> Result<f64, OracleError> {
    let term = |t: f64| {
        let (x, log_jac) = map(t);
        let v = log_f(x) + log_jac;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut h = 0.5;
    let n = (T_MAX / h) as i64;
    let mut terms: Vec<f64> = (-n..=n).map(|j| term(j as f64 * h)).collect();
    let mut prev = logsumexp(&terms) + h.ln();
    let mut change = f64::INFINITY;
    for level in 1..=MAX_LEVELS {
        h /= 2.0;
        let n = (T_MAX / h) as i64;
        // only the odd nodes are new
        terms.extend((-n..=n).filter(|j| j % 2 != 0).map(|j| term(j as f64 * h)));
        let cur = logsumexp(&terms) + h.ln();
        change = (cur - prev).abs();
        if change < TOL && level >= 3 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(OracleError::NoConvergence {
        achieved: change,
        levels: MAX_LEVELS,
    })
}

/// `log ∫_0^∞ exp(log_joint(ψ)) dψ`, with `ψ = exp(π/2 sinh t)`.
pub fn quadrature_marginal(log_joint: impl Fn(f64) -> f64) -> Result<f64, OracleError> {
    double_exponential(&log_joint, |t| {
        let u = FRAC_PI_2 * t.sinh();
        (u.exp(), u + (FRAC_PI_2 * t.cosh()).ln())
    })
}

/// `log ∫_ℝ exp(log_f(x)) dx`, with `x = sinh(π/2 sinh t)`.
pub fn quadrature_real_line(log_f: impl Fn(f64) -> f64) -> Result<f64, OracleError> {
    double_exponential(&log_f, |t| {
        let u = FRAC_PI_2 * t.sinh();
        (u.sinh(), u.cosh().ln() + (FRAC_PI_2 * t.cosh()).ln())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;

    fn scale_mixture(z: f64) -> impl Fn(f64) -> f64 {
        move |psi| {
            DistributionSpec::exponential(0.5).unwrap().log_prob(psi).unwrap()
                - 0.5 * (2.0 * std::f64::consts::PI * psi).ln()
                - z * z / (2.0 * psi)
        }
    }

    #[test]
    fn laplace_identity() {
        let at0 = quadrature_marginal(scale_mixture(0.0)).unwrap();
        assert!((at0 - 0.5f64.ln()).abs() < 1e-9, "{at0}");
        let at = quadrature_marginal(scale_mixture(1.5)).unwrap();
        assert!((at - (-(2f64.ln()) - 1.5)).abs() < 1e-9, "{at}");
    }

    #[test]
    fn narrow_gamma_prior_gives_gaussian() {
        let g = DistributionSpec::gamma(1e4, 1e4).unwrap();
        let z = 0.7;
        let v = quadrature_marginal(|psi| {
            g.log_prob(psi).unwrap_or(f64::NEG_INFINITY) - 0.5 * (2.0 * std::f64::consts::PI * psi).ln() - z * z / (2.0 * psi)
        })
        .unwrap();
        let want = DistributionSpec::normal(0.0, 1.0).unwrap().log_prob(z).unwrap();
        assert!((v.exp() - want.exp()).abs() < 1e-4);
    }

    #[test]
    fn gaussian_on_real_line() {
        let v = quadrature_real_line(|x| DistributionSpec::normal(0.3, 2.0).unwrap().log_prob(x).unwrap()).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }
}
