use super::traits::{AuxiliaryInference, ExplicitPrior, HierarchicalModel, Likelihood};
use super::ModelError;
use crate::autodiff::logsumexp;
use crate::rng::RngStream;

fn check_probs(what: &'static str, p: &[f64]) -> Result<(), ModelError> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > 1e-12 {
        return Err(ModelError::NotAProbabilityVector { what, sum });
    }
    Ok(())
}

fn state(v: &[f64], n: usize) -> Option<usize> {
    match v {
        [s] if *s >= 0.0 && s.fract() == 0.0 && (*s as usize) < n => Some(*s as usize),
        _ => None,
    }
}

/// Hierarchical model over finite `ψ` and `z`: `q(ψ)` is a probability
/// vector and row `i` of `z_given_psi` is `q(z | ψ = i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteHvm {
    psi_probs: Vec<f64>,
    z_given_psi: Vec<Vec<f64>>,
}

pub fn make_discrete_hvm(psi_probs: Vec<f64>, z_given_psi: Vec<Vec<f64>>) -> Result<DiscreteHvm, ModelError> {
    check_probs("psi_probs", &psi_probs)?;
    if z_given_psi.len() != psi_probs.len() {
        return Err(ModelError::Shape {
            what: "z_given_psi rows",
            expected: psi_probs.len(),
            got: z_given_psi.len(),
        });
    }
    let nz = z_given_psi.first().map_or(0, Vec::len);
    for row in &z_given_psi {
        if row.len() != nz {
            return Err(ModelError::Shape {
                what: "z_given_psi columns",
                expected: nz,
                got: row.len(),
            });
        }
        check_probs("z_given_psi row", row)?;
    }
    Ok(DiscreteHvm { psi_probs, z_given_psi })
}

impl DiscreteHvm {
    pub fn psi_states(&self) -> usize {
        self.psi_probs.len()
    }

    pub fn z_states(&self) -> usize {
        self.z_given_psi[0].len()
    }

    pub fn psi_probs(&self) -> &[f64] {
        &self.psi_probs
    }

    pub fn z_given_psi(&self, psi: usize) -> &[f64] {
        &self.z_given_psi[psi]
    }

    /// Marginal `q(z)` as a probability vector.
    pub fn z_marginal(&self) -> Vec<f64> {
        (0..self.z_states())
            .map(|z| (0..self.psi_states()).map(|s| self.psi_probs[s] * self.z_given_psi[s][z]).sum())
            .collect()
    }

    /// Posterior `q(ψ | z)` as a probability vector.
    pub fn posterior(&self, z: usize) -> Vec<f64> {
        let joint: Vec<f64> = (0..self.psi_states())
            .map(|s| self.psi_probs[s] * self.z_given_psi[s][z])
            .collect();
        let total: f64 = joint.iter().sum();
        joint.into_iter().map(|j| j / total).collect()
    }
}

impl HierarchicalModel for DiscreteHvm {
    fn sample_psi(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.categorical(&self.psi_probs) as f64]
    }

    fn sample_z_given_psi(&self, psi: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let s = state(psi, self.psi_states()).expect("ψ outside the support");
        vec![rng.categorical(&self.z_given_psi[s]) as f64]
    }

    fn log_psi_prior(&self, psi: &[f64]) -> f64 {
        state(psi, self.psi_states()).map_or(f64::NEG_INFINITY, |s| self.psi_probs[s].ln())
    }

    fn log_z_given_psi(&self, z: &[f64], psi: &[f64]) -> f64 {
        match (state(z, self.z_states()), state(psi, self.psi_states())) {
            (Some(z), Some(s)) => self.z_given_psi[s][z].ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    fn exact_log_marginal(&self, z: &[f64]) -> Option<f64> {
        let terms: Vec<f64> = (0..self.psi_states())
            .map(|s| self.log_joint(z, &[s as f64]))
            .collect();
        Some(logsumexp(&terms))
    }

    fn sample_exact_posterior(&self, z: &[f64], rng: &mut RngStream) -> Option<Vec<f64>> {
        let z = state(z, self.z_states())?;
        Some(vec![rng.categorical(&self.posterior(z)) as f64])
    }
}

/// `τ(ψ | z)` over a finite `ψ`: row `z` of `table` is a probability vector
/// over `ψ` states.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteTau {
    table: Vec<Vec<f64>>,
}

impl DiscreteTau {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        for row in &table {
            check_probs("tau row", row)?;
        }
        Ok(Self { table })
    }

    /// The prior `q(ψ)` for every `z` (the SIVI choice).
    pub fn from_prior(model: &DiscreteHvm) -> Self {
        Self {
            table: vec![model.psi_probs.clone(); model.z_states()],
        }
    }

    /// The exact inverse `q(ψ | z)`.
    pub fn posterior(model: &DiscreteHvm) -> Self {
        Self {
            table: (0..model.z_states()).map(|z| model.posterior(z)).collect(),
        }
    }

    pub fn probs(&self, z: usize) -> &[f64] {
        &self.table[z]
    }
}

impl AuxiliaryInference for DiscreteTau {
    fn log_prob(&self, psi: &[f64], z: &[f64]) -> f64 {
        let Some(z) = state(z, self.table.len()) else {
            return f64::NEG_INFINITY;
        };
        state(psi, self.table[z].len()).map_or(f64::NEG_INFINITY, |s| self.table[z][s].ln())
    }

    fn sample(&self, z: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let z = state(z, self.table.len()).expect("z outside the support");
        vec![rng.categorical(&self.table[z]) as f64]
    }
}

/// A probability table over finite states, usable as an explicit prior
/// `p(z)` or (holding `p(x | z)` for a fixed `x`) as a likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct Table(pub Vec<f64>);

impl Table {
    fn log_at(&self, v: &[f64]) -> f64 {
        state(v, self.0.len()).map_or(f64::NEG_INFINITY, |i| self.0[i].ln())
    }
}

impl ExplicitPrior for Table {
    fn log_prob(&self, z: &[f64]) -> f64 {
        self.log_at(z)
    }
}

impl Likelihood for Table {
    fn log_likelihood(&self, z: &[f64]) -> f64 {
        self.log_at(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DiscreteHvm {
        make_discrete_hvm(vec![0.5, 0.5], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap()
    }

    #[test]
    fn marginal_of_two_point_model() {
        let m = two_point();
        assert!((m.exact_log_marginal(&[1.0]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_symmetric_mixtures() {
        let m = make_discrete_hvm(vec![1.0], vec![vec![0.3, 0.7]]).unwrap();
        assert!((m.exact_log_marginal(&[1.0]).unwrap() - 0.7f64.ln()).abs() < 1e-15);
        let m = make_discrete_hvm(vec![0.1, 0.9], vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert!((m.exact_log_marginal(&[0.0]).unwrap() - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        assert!(make_discrete_hvm(vec![0.5, 0.5], vec![vec![1.0]]).is_err());
        assert!(make_discrete_hvm(vec![1.0], vec![vec![0.5, 0.6]]).is_err());
        assert!(make_discrete_hvm(vec![0.5, 0.5], vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn out_of_support_is_neg_infinity() {
        let m = two_point();
        assert_eq!(m.log_z_given_psi(&[2.0], &[0.0]), f64::NEG_INFINITY);
        assert_eq!(m.log_psi_prior(&[0.5]), f64::NEG_INFINITY);
    }
}
