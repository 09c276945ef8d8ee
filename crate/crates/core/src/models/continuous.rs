use super::traits::{AuxiliaryInference, HierarchicalModel, TapeAuxiliary, TapeJoint};
use super::ModelError;
use crate::autodiff::{Bindings, NodeId, ParamStore, Tape, Tensor};
use crate::distributions::TapeDist;
use crate::rng::RngStream;
use std::f64::consts::{LN_2, PI};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn normal_lp(x: f64, mean: f64, var: f64) -> f64 {
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * (x - mean) * (x - mean) / var
}

/// `ψ_d ~ Exponential(rate ½)`, `z_d | ψ ~ N(0, ψ_d)` with `ψ_d` the
/// *variance*. Only that reading makes the marginal a standard Laplace
/// (Gaussian scale mixture with exponential mixing of the variance).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceScaleMixture {
    pub dim: usize,
}

pub const MIXING_RATE: f64 = 0.5;

pub fn make_laplace_scale_mixture(dim: usize) -> LaplaceScaleMixture {
    assert!(dim >= 1, "dimension must be positive");
    LaplaceScaleMixture { dim }
}

impl LaplaceScaleMixture {
    /// `E log q(z)`: the negative differential entropy, `-dim (1 + ln 2)`.
    pub fn negative_entropy(&self) -> f64 {
        -(self.dim as f64) * (1.0 + LN_2)
    }
}

impl HierarchicalModel for LaplaceScaleMixture {
    fn sample_psi(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.dim).map(|_| -rng.uniform().ln() / MIXING_RATE).collect()
    }

    fn sample_z_given_psi(&self, psi: &[f64], rng: &mut RngStream) -> Vec<f64> {
        psi.iter().map(|&v| v.sqrt() * rng.normal()).collect()
    }

    fn log_psi_prior(&self, psi: &[f64]) -> f64 {
        psi.iter()
            .map(|&v| if v < 0.0 { f64::NEG_INFINITY } else { MIXING_RATE.ln() - MIXING_RATE * v })
            .sum()
    }

    fn log_z_given_psi(&self, z: &[f64], psi: &[f64]) -> f64 {
        z.iter()
            .zip(psi)
            .map(|(&z, &v)| if v > 0.0 { normal_lp(z, 0.0, v) } else { f64::NEG_INFINITY })
            .sum()
    }

    fn exact_log_marginal(&self, z: &[f64]) -> Option<f64> {
        Some(z.iter().map(|v| -LN_2 - v.abs()).sum())
    }
}

impl TapeJoint for LaplaceScaleMixture {
    fn log_joint_tape(&self, tape: &mut Tape, z: NodeId, psi: NodeId) -> Result<NodeId, ModelError> {
        // Σ_d  ln ½ − ψ/2 − ½ ln(2πψ) − z²/(2ψ)
        let z2 = tape.square(z)?;
        let r = tape.div(z2, psi)?;
        let r = tape.scale(r, -0.5)?;
        let lp = tape.log(psi)?;
        let lp = tape.scale(lp, -0.5)?;
        let lin = tape.scale(psi, -MIXING_RATE)?;
        let t = tape.add(r, lp)?;
        let t = tape.add(t, lin)?;
        let t = tape.add_scalar(t, MIXING_RATE.ln() - HALF_LN_2PI)?;
        Ok(tape.sum_rows(t)?)
    }
}

/// Linear-Gaussian hierarchy, independent per dimension:
/// `ψ ~ N(psi_mean, psi_var)`, `z | ψ ~ N(ψ, z_var)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHierarchy {
    pub psi_mean: Vec<f64>,
    pub psi_var: f64,
    pub z_var: f64,
}

impl GaussianHierarchy {
    pub fn new(psi_mean: Vec<f64>, psi_var: f64, z_var: f64) -> Self {
        assert!(psi_var > 0.0 && z_var > 0.0, "variances must be positive");
        Self { psi_mean, psi_var, z_var }
    }

    pub fn dim(&self) -> usize {
        self.psi_mean.len()
    }

    /// Per-dimension mean and variance of `q(ψ | z)`.
    pub fn posterior_params(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let total = self.psi_var + self.z_var;
        let means = z
            .iter()
            .zip(&self.psi_mean)
            .map(|(&z, &m)| (self.z_var * m + self.psi_var * z) / total)
            .collect();
        (means, self.psi_var * self.z_var / total)
    }
}

impl HierarchicalModel for GaussianHierarchy {
    fn sample_psi(&self, rng: &mut RngStream) -> Vec<f64> {
        let sd = self.psi_var.sqrt();
        self.psi_mean.iter().map(|&m| m + sd * rng.normal()).collect()
    }

    fn sample_z_given_psi(&self, psi: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let sd = self.z_var.sqrt();
        psi.iter().map(|&p| p + sd * rng.normal()).collect()
    }

    fn log_psi_prior(&self, psi: &[f64]) -> f64 {
        psi.iter().zip(&self.psi_mean).map(|(&p, &m)| normal_lp(p, m, self.psi_var)).sum()
    }

    fn log_z_given_psi(&self, z: &[f64], psi: &[f64]) -> f64 {
        z.iter().zip(psi).map(|(&z, &p)| normal_lp(z, p, self.z_var)).sum()
    }

    fn exact_log_marginal(&self, z: &[f64]) -> Option<f64> {
        let var = self.psi_var + self.z_var;
        Some(z.iter().zip(&self.psi_mean).map(|(&z, &m)| normal_lp(z, m, var)).sum())
    }

    fn sample_exact_posterior(&self, z: &[f64], rng: &mut RngStream) -> Option<Vec<f64>> {
        let (means, var) = self.posterior_params(z);
        let sd = var.sqrt();
        Some(means.into_iter().map(|m| m + sd * rng.normal()).collect())
    }
}

impl TapeJoint for GaussianHierarchy {
    fn log_joint_tape(&self, tape: &mut Tape, z: NodeId, psi: NodeId) -> Result<NodeId, ModelError> {
        let m = tape.leaf(Tensor::row(self.psi_mean.clone()));
        let d1 = tape.sub(psi, m)?;
        let q1 = tape.square(d1)?;
        let q1 = tape.scale(q1, -0.5 / self.psi_var)?;
        let d2 = tape.sub(z, psi)?;
        let q2 = tape.square(d2)?;
        let q2 = tape.scale(q2, -0.5 / self.z_var)?;
        let t = tape.add(q1, q2)?;
        let c = -2.0 * HALF_LN_2PI - 0.5 * (self.psi_var.ln() + self.z_var.ln());
        let t = tape.add_scalar(t, c)?;
        Ok(tape.sum_rows(t)?)
    }
}

/// `τ(ψ | z) = N(ψ | A z + b, var · I)` with a dense `A` (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianTau {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub var: f64,
}

impl LinearGaussianTau {
    pub fn mean(&self, z: &[f64]) -> Vec<f64> {
        let d = self.b.len();
        (0..d)
            .map(|i| self.b[i] + (0..z.len()).map(|j| self.a[i * z.len() + j] * z[j]).sum::<f64>())
            .collect()
    }
}

impl AuxiliaryInference for LinearGaussianTau {
    fn log_prob(&self, psi: &[f64], z: &[f64]) -> f64 {
        psi.iter().zip(self.mean(z)).map(|(&p, m)| normal_lp(p, m, self.var)).sum()
    }

    fn sample(&self, z: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let sd = self.var.sqrt();
        self.mean(z).into_iter().map(|m| m + sd * rng.normal()).collect()
    }
}

/// Trainable form of [`LinearGaussianTau`]: blocks `{name}.w` holding `Aᵀ`
/// (so a batch of row vectors maps as `Z W + b`) and `{name}.b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTauNet {
    pub name: String,
    pub dim: usize,
    pub var: f64,
}

impl LinearTauNet {
    pub fn new(name: &str, dim: usize, var: f64) -> Self {
        Self {
            name: name.to_string(),
            dim,
            var,
        }
    }

    fn keys(&self) -> (String, String) {
        (format!("{}.w", self.name), format!("{}.b", self.name))
    }

    /// Stores `tau`'s `A` and `b`.
    pub fn init_from(&self, store: &mut ParamStore, tau: &LinearGaussianTau) {
        let d = self.dim;
        let (w, b) = self.keys();
        store.insert(w, Tensor::from_fn(d, d, |i, j| tau.a[j * d + i]));
        store.insert(b, Tensor::row(tau.b.clone()));
    }

    pub fn to_tau(&self, store: &ParamStore) -> LinearGaussianTau {
        let d = self.dim;
        let (w, b) = self.keys();
        let w = store.value(&w);
        LinearGaussianTau {
            a: (0..d * d).map(|k| w.get(k % d, k / d)).collect(),
            b: store.value(&b).data().to_vec(),
            var: self.var,
        }
    }
}

impl TapeAuxiliary for LinearTauNet {
    fn dist_tape(&self, tape: &mut Tape, params: &Bindings, z: NodeId) -> Result<TapeDist, ModelError> {
        let (w, b) = self.keys();
        let zw = tape.matmul(z, params.get(&w))?;
        let mean = tape.add(zw, params.get(&b))?;
        let stddev = tape.constant(self.var.sqrt());
        Ok(TapeDist::Normal { mean, stddev })
    }
}

pub const SNR_DIM: usize = 10;
pub const SNR_TAU_VAR: f64 = 2.0 / 3.0;

/// The gradient-noise toy task: `q(x, z) = N(x | z, I) N(z | θ, I)` with
/// `θ = 1` in ten dimensions. In hierarchical terms the observed `x` plays
/// the latent role and `z` the auxiliary one. The returned `τ` is the
/// linear-Gaussian inverse at the identity initialisation `A = I, b = 0`.
pub fn make_snr_task() -> (GaussianHierarchy, LinearGaussianTau) {
    let model = GaussianHierarchy::new(vec![1.0; SNR_DIM], 1.0, 1.0);
    let mut a = vec![0.0; SNR_DIM * SNR_DIM];
    for i in 0..SNR_DIM {
        a[i * SNR_DIM + i] = 1.0;
    }
    let tau = LinearGaussianTau {
        a,
        b: vec![0.0; SNR_DIM],
        var: SNR_TAU_VAR,
    };
    (model, tau)
}

/// The optimal-mean `τ` of the toy task: `A = ½ I`, `b = ½ θ`.
pub fn snr_optimal_tau() -> LinearGaussianTau {
    let mut a = vec![0.0; SNR_DIM * SNR_DIM];
    for i in 0..SNR_DIM {
        a[i * SNR_DIM + i] = 0.5;
    }
    LinearGaussianTau {
        a,
        b: vec![0.5; SNR_DIM],
        var: SNR_TAU_VAR,
    }
}

/// Density of `N(mean, var)` at `x`, for quadrature checks.
pub fn normal_density(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_marginals() {
        let m = make_laplace_scale_mixture(50);
        assert!((m.exact_log_marginal(&[0.0; 50]).unwrap() + 50.0 * LN_2).abs() < 1e-12);
        let m = make_laplace_scale_mixture(1);
        assert!((m.exact_log_marginal(&[1.0]).unwrap() + LN_2 + 1.0).abs() < 1e-15);
    }

    #[test]
    fn snr_marginal_at_theta() {
        let (m, _) = make_snr_task();
        let lq = m.exact_log_marginal(&[1.0; SNR_DIM]).unwrap();
        assert!((lq + 5.0 * (4.0 * PI).ln()).abs() < 1e-12);
        let (mean, var) = m.posterior_params(&[1.0; SNR_DIM]);
        assert!(mean.iter().all(|&v| (v - 1.0).abs() < 1e-15) && var == 0.5);
        let opt = snr_optimal_tau();
        let x = [0.3, -1.0, 2.0, 0.0, 1.0, 1.5, -0.5, 0.7, 3.0, 1.1];
        for (a, b) in opt.mean(&x).iter().zip(m.posterior_params(&x).0) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_posterior_is_consistent() {
        let m = GaussianHierarchy::new(vec![1.0], 0.5, 0.5);
        let z = [0.4];
        let (mean, var) = m.posterior_params(&z);
        assert!((mean[0] - 0.7).abs() < 1e-15 && (var - 0.25).abs() < 1e-15);
        // Bayes: log q(ψ|z) = log q(z,ψ) − log q(z) at any ψ
        let psi = [0.9];
        let lhs = normal_lp(psi[0], mean[0], var);
        let rhs = m.log_joint(&z, &psi) - m.exact_log_marginal(&z).unwrap();
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
