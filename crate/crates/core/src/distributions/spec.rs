use super::{gamma, DistributionError, Result};
use crate::rng::RngStream;
use crate::special::ln_gamma;
use std::f64::consts::{LN_2, PI};

/// A univariate distribution with fixed real parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    Normal { mean: f64, stddev: f64 },
    Laplace { location: f64, scale: f64 },
    Exponential { rate: f64 },
    Gamma { concentration: f64, rate: f64 },
    Bernoulli { probability: f64 },
    FiniteCategorical { probabilities: Vec<f64> },
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(DistributionError::InvalidParameter { name, value })
    }
}

impl DistributionSpec {
    pub fn normal(mean: f64, stddev: f64) -> Result<Self> {
        positive("stddev", stddev)?;
        Ok(Self::Normal { mean, stddev })
    }

    pub fn laplace(location: f64, scale: f64) -> Result<Self> {
        positive("scale", scale)?;
        Ok(Self::Laplace { location, scale })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn gamma(concentration: f64, rate: f64) -> Result<Self> {
        positive("concentration", concentration)?;
        positive("rate", rate)?;
        Ok(Self::Gamma { concentration, rate })
    }

    pub fn bernoulli(probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(DistributionError::InvalidParameter {
                name: "probability",
                value: probability,
            });
        }
        Ok(Self::Bernoulli { probability })
    }

    pub fn categorical(probabilities: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = probabilities.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
            return Err(DistributionError::InvalidParameter {
                name: "probability",
                value: bad,
            });
        }
        let total: f64 = probabilities.iter().sum();
        if probabilities.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(DistributionError::InvalidParameter {
                name: "probability sum",
                value: total,
            });
        }
        Ok(Self::FiniteCategorical { probabilities })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Normal { .. } => "Normal",
            Self::Laplace { .. } => "Laplace",
            Self::Exponential { .. } => "Exponential",
            Self::Gamma { .. } => "Gamma",
            Self::Bernoulli { .. } => "Bernoulli",
            Self::FiniteCategorical { .. } => "FiniteCategorical",
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Self::Bernoulli { .. } | Self::FiniteCategorical { .. })
    }

    /// Natural-log density (or mass for the discrete kinds).
    pub fn log_prob(&self, x: f64) -> Result<f64> {
        let outside = || DistributionError::OutsideSupport {
            kind: self.kind(),
            value: x,
        };
        Ok(match *self {
            Self::Normal { mean, stddev } => {
                let u = (x - mean) / stddev;
                -0.5 * (2.0 * PI).ln() - stddev.ln() - 0.5 * u * u
            }
            Self::Laplace { location, scale } => -LN_2 - scale.ln() - (x - location).abs() / scale,
            Self::Exponential { rate } => {
                if x < 0.0 {
                    return Err(outside());
                }
                rate.ln() - rate * x
            }
            Self::Gamma { concentration, rate } => {
                if x <= 0.0 {
                    return Err(outside());
                }
                concentration * rate.ln() - ln_gamma(concentration) + (concentration - 1.0) * x.ln()
                    - rate * x
            }
            Self::Bernoulli { probability } => {
                if x == 1.0 {
                    probability.ln()
                } else if x == 0.0 {
                    (1.0 - probability).ln()
                } else {
                    return Err(outside());
                }
            }
            Self::FiniteCategorical { ref probabilities } => {
                if x < 0.0 || x.fract() != 0.0 || x as usize >= probabilities.len() {
                    return Err(outside());
                }
                probabilities[x as usize].ln()
            }
        })
    }

    /// Forward-only draw. Uniform consumption per draw: Normal 2, Laplace 1,
    /// Exponential 1, Bernoulli 1, FiniteCategorical 1; Gamma is a rejection
    /// sampler and advances the stream by a variable amount.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Self::Normal { mean, stddev } => mean + stddev * rng.normal(),
            Self::Laplace { location, scale } => location + scale * standard_laplace(rng.uniform()),
            Self::Exponential { rate } => -rng.uniform().ln() / rate,
            Self::Gamma { concentration, rate } => gamma::sample_standard(concentration, rng) / rate,
            Self::Bernoulli { probability } => (rng.uniform() < probability) as u8 as f64,
            Self::FiniteCategorical { ref probabilities } => rng.categorical(probabilities) as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Normal { mean, .. } => mean,
            Self::Laplace { location, .. } => location,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { concentration, rate } => concentration / rate,
            Self::Bernoulli { probability } => probability,
            Self::FiniteCategorical { ref probabilities } => {
                probabilities.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Normal { stddev, .. } => stddev * stddev,
            Self::Laplace { scale, .. } => 2.0 * scale * scale,
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Gamma { concentration, rate } => concentration / (rate * rate),
            Self::Bernoulli { probability } => probability * (1.0 - probability),
            Self::FiniteCategorical { ref probabilities } => {
                let m = self.mean();
                probabilities
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (i as f64 - m).powi(2))
                    .sum()
            }
        }
    }

    /// Full support with probabilities, for the discrete kinds.
    pub fn enumerate(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            Self::Bernoulli { probability } => Ok(vec![(0.0, 1.0 - probability), (1.0, *probability)]),
            Self::FiniteCategorical { probabilities } => Ok(probabilities
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as f64, p))
                .collect()),
            _ => Err(DistributionError::UnsupportedKind {
                kind: self.kind(),
                operation: "enumerate",
            }),
        }
    }
}

/// Inverse CDF of the standard Laplace distribution.
pub(crate) fn standard_laplace(u: f64) -> f64 {
    let c = u - 0.5;
    -c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// Product of independent univariate components.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedSpec {
    pub components: Vec<DistributionSpec>,
}

impl FactorizedSpec {
    pub fn new(components: Vec<DistributionSpec>) -> Self {
        Self { components }
    }

    pub fn iid(component: DistributionSpec, dim: usize) -> Self {
        Self::new(vec![component; dim])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.components.len() {
            return Err(DistributionError::Dimension {
                expected: self.components.len(),
                got: x.len(),
            });
        }
        self.components
            .iter()
            .zip(x)
            .map(|(d, &v)| d.log_prob(v))
            .sum()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.components.iter().map(|d| d.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_prob_reference_values() {
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert!((n.log_prob(0.0).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-15);
        let l = DistributionSpec::laplace(0.0, 1.0).unwrap();
        assert!((l.log_prob(0.0).unwrap() + LN_2).abs() < 1e-15);
        let e = DistributionSpec::exponential(0.5).unwrap();
        assert!((e.log_prob(2.0).unwrap() - (0.5f64.ln() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn support_and_parameter_errors() {
        let g = DistributionSpec::gamma(2.0, 1.0).unwrap();
        assert!(matches!(g.log_prob(-1.0), Err(DistributionError::OutsideSupport { .. })));
        assert!(DistributionSpec::normal(0.0, 0.0).is_err());
        assert!(DistributionSpec::bernoulli(1.2).is_err());
        assert!(DistributionSpec::categorical(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn enumeration() {
        let b = DistributionSpec::bernoulli(0.3).unwrap();
        let e = b.enumerate().unwrap();
        assert_eq!(e[0].0, 0.0);
        assert!((e[0].1 - 0.7).abs() < 1e-15 && e[1] == (1.0, 0.3));
        let c = DistributionSpec::categorical(vec![0.2, 0.8]).unwrap();
        assert_eq!(c.enumerate().unwrap(), vec![(0.0, 0.2), (1.0, 0.8)]);
        let d = DistributionSpec::categorical(vec![1.0]).unwrap();
        assert_eq!(d.enumerate().unwrap(), vec![(0.0, 1.0)]);
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert!(matches!(n.enumerate(), Err(DistributionError::UnsupportedKind { .. })));
    }

    #[test]
    fn factorized_sums_components() {
        let f = FactorizedSpec::iid(DistributionSpec::laplace(0.0, 1.0).unwrap(), 3);
        let lp = f.log_prob(&[0.0, 1.0, -2.0]).unwrap();
        assert!((lp - (-3.0 * LN_2 - 3.0)).abs() < 1e-14);
        assert!(f.log_prob(&[0.0]).is_err());
    }
}
