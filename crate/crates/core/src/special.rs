//! Special functions: log-gamma, digamma, trigamma and the regularized
//! incomplete gamma function with its inverse.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the series in its accurate range
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli-number tail B_2n / (2n x^2n), Horner in 1/x²
    const C: [f64; 7] = [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];
    let series = inv2 * C.iter().rev().fold(0.0, |acc, &c| acc * inv2 + c);
    shift + x.ln() - 0.5 / x - series
}

/// Trigamma `ψ'(x)` for `x > 0`; the derivative of [`digamma`].
pub fn trigamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 6.0 {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    const B: [f64; 7] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];
    let series = inv + 0.5 * inv2 + inv * inv2 * B.iter().rev().fold(0.0, |acc, &c| acc * inv2 + c);
    shift + series
}

const GAMMA_TOL: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 100_000;

/// Regularized lower incomplete gamma `P(a, x)` (series below `a + 1`,
/// Lentz continued fraction above).
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..GAMMA_MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_TOL {
                break;
            }
        }
        (sum.ln() + log_prefactor).exp().min(1.0)
    } else {
        1.0 - upper_continued_fraction(a, x, log_prefactor)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - regularized_gamma_p(a, x)
    } else {
        upper_continued_fraction(a, x, a * x.ln() - x - ln_gamma(a))
    }
}

fn upper_continued_fraction(a: f64, x: f64, log_prefactor: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_TOL {
            break;
        }
    }
    (log_prefactor + h.ln()).exp()
}

/// Log-density of the unit-rate Gamma distribution with shape `a`.
pub fn ln_gamma_density(a: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() - x - ln_gamma(a)
}

/// Quantile of the unit-rate Gamma distribution: the `x` with `P(a, x) = p`.
pub fn gamma_quantile(a: f64, p: f64) -> f64 {
    assert!(a > 0.0 && (0.0..1.0).contains(&p), "gamma_quantile domain");
    if p == 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = a.max(1.0);
    while regularized_gamma_p(a, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let f = regularized_gamma_p(a, x) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let density = ln_gamma_density(a, x).exp();
        let mut next = if density > 0.0 { x - f / density } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}
