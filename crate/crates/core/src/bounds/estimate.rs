use crate::autodiff::logsumexp;

/// A Monte Carlo bound value with the log-weights that entered its final
/// log-mean-exp.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub log_weights: Vec<f64>,
    /// `(Σw)² / Σw²` over the normalized weights; 0 when degenerate.
    pub ess: f64,
    /// Every weight was zero (all log-weights `-∞`).
    pub degenerate: bool,
    /// Evaluations of the conditional density `q(z | ψ)`.
    pub density_evals: usize,
}

impl Estimate {
    /// `value = log mean exp(log_weights)`.
    pub fn from_log_weights(log_weights: Vec<f64>, density_evals: usize) -> Self {
        let value = log_mean_exp(&log_weights);
        Self::with_value(value, log_weights, density_evals)
    }

    pub fn with_value(value: f64, log_weights: Vec<f64>, density_evals: usize) -> Self {
        let degenerate = log_weights.iter().all(|&w| w == f64::NEG_INFINITY);
        Self {
            value,
            ess: if degenerate { 0.0 } else { ess(&log_weights) },
            log_weights,
            degenerate,
            density_evals,
        }
    }
}

/// `log (1/n) Σ exp(v_i)`, overflow-safe; `-∞` for an empty or all-`-∞`
/// input.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    logsumexp(values) - (values.len() as f64).ln()
}

/// Effective sample size of importance weights given in log-space.
pub fn ess(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let (s1, s2) = log_weights.iter().fold((0.0, 0.0), |(a, b), &l| {
        let w = (l - max).exp();
        (a + w, b + w * w)
    });
    s1 * s1 / s2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_invariance_at_700() {
        let w = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = w.iter().map(|v| v + 700.0).collect();
        assert!((log_mean_exp(&shifted) - 700.0 - log_mean_exp(&w)).abs() < 1e-12);
        assert!((ess(&shifted) - ess(&w)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_weights_are_flagged() {
        let e = Estimate::from_log_weights(vec![f64::NEG_INFINITY; 3], 3);
        assert!(e.degenerate && e.value == f64::NEG_INFINITY && e.ess == 0.0);
        let e = Estimate::from_log_weights(vec![1.0, 1.0, 1.0], 3);
        assert!((e.ess - 3.0).abs() < 1e-12 && !e.degenerate);
    }
}
