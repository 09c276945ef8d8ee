/// `KL(N(m1, diag v1) ‖ N(m2, diag v2))`.
pub fn gaussian_kl(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    m1.iter()
        .zip(v1)
        .zip(m2.iter().zip(v2))
        .map(|((a, va), (b, vb))| 0.5 * (va / vb + (a - b).powi(2) / vb - 1.0 + (vb / va).ln()))
        .sum()
}

/// Inverse of `x | ψ ~ N(ψ, I)`, `ψ ~ N(θ, I)`: mean `(x + θ) / 2`,
/// variance `½` per coordinate.
pub fn snr_posterior(x: &[f64], theta: &[f64]) -> (Vec<f64>, f64) {
    (x.iter().zip(theta).map(|(a, b)| 0.5 * (a + b)).collect(), 0.5)
}

/// `log N(x | θ, 2I)`, the marginal of the same model.
pub fn snr_marginal_log_density(x: &[f64], theta: &[f64]) -> f64 {
    x.iter()
        .zip(theta)
        .map(|(a, b)| -0.5 * (4.0 * std::f64::consts::PI).ln() - (a - b).powi(2) / 4.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((gaussian_kl(&[0.0], &[1.0], &[1.0], &[1.0]) - 0.5).abs() < 1e-15);
        let per_dim = gaussian_kl(&[0.0], &[0.5], &[0.0], &[2.0 / 3.0]);
        assert!((per_dim - 0.5 * (0.75 + (4f64 / 3.0).ln() - 1.0)).abs() < 1e-15);
        assert!((per_dim - 0.018841).abs() < 1e-6);
        let theta = vec![1.0; 10];
        let (m, v) = snr_posterior(&theta, &theta);
        assert_eq!(m, theta);
        assert_eq!(v, 0.5);
        assert!((snr_marginal_log_density(&theta, &theta) + 5.0 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }
}
