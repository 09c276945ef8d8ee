//! Ground truth for the estimators: exact expectations over finite models by
//! enumeration, double-exponential quadrature for one-dimensional marginals,
//! central finite differences and closed-form Gaussian identities.

mod enumerate;
mod gaussian;
mod gradient;
mod quadrature;

pub use enumerate::{
    enumerate_omega, enumerate_tuples, exact_expected_bound, posterior_support, random_finite_instance,
    exact_expected_outer, random_probs, tau_support, BoundKind, FiniteInstance, FiniteSupport, OuterLayout,
};
pub use gaussian::{gaussian_kl, snr_marginal_log_density, snr_posterior};
pub use gradient::exact_upper_and_grad;
pub use quadrature::{quadrature_marginal, quadrature_real_line};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration needs {required} tuples, over the budget of {budget}")]
    Budget { required: u128, budget: u128 },
    #[error("quadrature did not converge: last change {achieved:e} after {levels} refinements")]
    NoConvergence { achieved: f64, levels: usize },
    #[error("invalid finite support: {0}")]
    Support(String),
    #[error(transparent)]
    Bound(#[from] crate::bounds::BoundError),
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let hi = f(&probe);
            probe[i] = x[i] - step;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}
