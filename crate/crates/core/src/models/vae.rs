use super::mlp::{Head, Mlp, MlpCond};
use super::traits::{AuxiliaryInference, ExplicitPrior, HierarchicalModel, Likelihood};
use super::ModelError;
use crate::autodiff::{softplus, NodeId, ParamStore, Tape, Tensor};
use crate::distributions::TapeDist;
use crate::rng::RngStream;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn std_normal_lp(v: &[f64]) -> f64 {
    v.iter().map(|x| -HALF_LN_2PI - 0.5 * x * x).sum()
}

/// Sizes of a [`MiniVae`].
#[derive(Clone, Debug, PartialEq)]
pub struct VaeShape {
    pub input_dim: usize,
    pub z_dim: usize,
    pub psi_dim: usize,
    pub hidden: Vec<usize>,
    /// Initial logit of the per-layer gates on the encoder's `ψ` inputs;
    /// `None` leaves `ψ` ungated.
    pub encoder_gate: Option<f64>,
}

impl Default for VaeShape {
    fn default() -> Self {
        Self {
            input_dim: 784,
            z_dim: 8,
            psi_dim: 8,
            hidden: vec![64, 64],
            encoder_gate: None,
        }
    }
}

/// Bernoulli decoder `p(x | z)` with prior `p(z) = N(0, I)`; hierarchical
/// Gaussian encoder `q(z | ψ, x)` with `ψ` fed to every layer and
/// `q(ψ) = N(0, I)`; Gaussian `τ(ψ | z, x)` on `concat(x, z)`, gated toward
/// `q(ψ)` at initialisation.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniVae {
    pub shape: VaeShape,
    pub decoder: Mlp,
    pub encoder: MlpCond,
    pub tau: MlpCond,
}

pub fn make_mini_vae(shape: VaeShape) -> Result<MiniVae, ModelError> {
    if shape.input_dim == 0 || shape.z_dim == 0 || shape.psi_dim == 0 || shape.hidden.contains(&0) {
        return Err(ModelError::Shape {
            what: "VAE dimensions must be positive",
            expected: 1,
            got: 0,
        });
    }
    let decoder = Mlp::new("dec", shape.z_dim, shape.hidden.clone(), shape.input_dim);
    let encoder = MlpCond::new("enc", shape.input_dim, shape.hidden.clone(), Head::Normal, shape.z_dim, None)
        .with_side(shape.psi_dim, true, shape.encoder_gate);
    let tau = MlpCond::new("tau", shape.input_dim, shape.hidden.clone(), Head::Normal, shape.psi_dim, Some((0.0, 1.0)))
        .with_side(shape.z_dim, false, None);
    Ok(MiniVae {
        shape,
        decoder,
        encoder,
        tau,
    })
}

/// Tape nodes of one IWHVI pass over a batch (rows = observations).
pub struct IwhviNodes {
    /// `log p(x | z)`, B×1.
    pub log_lik: NodeId,
    /// `log p(z)`, B×1.
    pub log_prior: NodeId,
    /// `log q(z | ψ_k)`, B×(K+1).
    pub log_q_cond: NodeId,
    /// `log q(ψ_k) - log τ(ψ_k | z, x)`, B×(K+1).
    pub log_psi_ratio: NodeId,
    /// The τ distribution for the batch (B rows), for gradient surgery.
    pub tau: TapeDist,
    pub z: NodeId,
    pub psi: NodeId,
}

/// Reshapes a k-major column ((K+1)·B × 1) into B×(K+1).
pub fn k_major_to_rows(tape: &mut Tape, col: NodeId, groups: usize) -> Result<NodeId, ModelError> {
    let n = tape.value(col).rows() / groups;
    let m = tape.reshape(col, groups, n)?;
    Ok(tape.transpose(m)?)
}

impl MiniVae {
    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        self.decoder.init(store, &mut rng.split(0));
        self.encoder.init(store, &mut rng.split(1));
        self.tau.init(store, &mut rng.split(2));
    }

    /// Records the per-sample IWHVI ingredients for a batch `x` (B×D).
    pub fn iwhvi_tape(
        &self,
        tape: &mut Tape,
        p: &crate::autodiff::Bindings,
        x: NodeId,
        k: usize,
        rng: &mut RngStream,
    ) -> Result<IwhviNodes, ModelError> {
        let b = tape.value(x).rows();
        let dpsi = self.shape.psi_dim;
        let psi0 = tape.leaf(Tensor::from_fn(b, dpsi, |_, _| rng.normal()));
        let enc0 = self.encoder.dist_tape(tape, p, x, Some(psi0))?;
        let z = enc0.sample_reparam(tape, rng)?;
        let tau = self.tau.dist_tape(tape, p, x, Some(z))?;
        let mut psis = vec![psi0];
        let mut lq = vec![enc0.log_prob_rows(tape, z)?];
        if k > 0 {
            let tau_rep = tile(tape, tau, k)?;
            let psik = tau_rep.sample_reparam(tape, rng)?;
            let zk = tape.repeat_rows(z, k)?;
            let enck = self.encoder.dist_tape(tape, p, x, Some(psik))?;
            lq.push(enck.log_prob_rows(tape, zk)?);
            psis.push(psik);
        }
        let psi = tape.concat_rows(&psis)?;
        let lq = tape.concat_rows(&lq)?;
        let tau_all = tile(tape, tau, k + 1)?;
        let lt = tau_all.log_prob_rows(tape, psi)?;
        let lpsi = std_normal_rows(tape, psi)?;
        let ratio = tape.sub(lpsi, lt)?;
        let logits = self.decoder.forward_tape(tape, p, z, None)?;
        let lik = TapeDist::BernoulliLogits { logits }.log_prob_rows(tape, x)?;
        let prior = std_normal_rows(tape, z)?;
        Ok(IwhviNodes {
            log_lik: lik,
            log_prior: prior,
            log_q_cond: k_major_to_rows(tape, lq, k + 1)?,
            log_psi_ratio: k_major_to_rows(tape, ratio, k + 1)?,
            tau,
            z,
            psi,
        })
    }

    /// Plain-arithmetic view of `q(z, ψ | x)` for one observation.
    pub fn encoder_at<'a>(&'a self, store: &'a ParamStore, x: &[f64]) -> EncoderAt<'a> {
        EncoderAt {
            vae: self,
            store,
            projection: self.encoder.mlp.project_input(store, x),
        }
    }

    pub fn tau_at<'a>(&'a self, store: &'a ParamStore, x: &[f64]) -> TauAt<'a> {
        TauAt {
            vae: self,
            store,
            projection: self.tau.mlp.project_input(store, x),
        }
    }

    pub fn likelihood_at<'a>(&'a self, store: &'a ParamStore, x: &'a [f64]) -> LikelihoodAt<'a> {
        LikelihoodAt { vae: self, store, x }
    }
}

/// Tiles every parameter of `d` `n` times (k-major rows).
pub fn tile(tape: &mut Tape, d: TapeDist, n: usize) -> Result<TapeDist, ModelError> {
    if n == 1 {
        return Ok(d);
    }
    // parameters with fewer rows than the batch broadcast already
    let base = d.shape(tape).0;
    let mut rep = |id: NodeId| -> Result<NodeId, ModelError> {
        Ok(if tape.value(id).rows() == base { tape.repeat_rows(id, n)? } else { id })
    };
    Ok(match d {
        TapeDist::Normal { mean, stddev } => TapeDist::Normal {
            mean: rep(mean)?,
            stddev: rep(stddev)?,
        },
        TapeDist::Gamma { concentration, rate } => TapeDist::Gamma {
            concentration: rep(concentration)?,
            rate: rep(rate)?,
        },
        TapeDist::Laplace { location, scale } => TapeDist::Laplace {
            location: rep(location)?,
            scale: rep(scale)?,
        },
        TapeDist::Exponential { rate } => TapeDist::Exponential { rate: rep(rate)? },
        TapeDist::BernoulliLogits { logits } => TapeDist::BernoulliLogits { logits: rep(logits)? },
    })
}

/// Row-wise `log N(v | 0, I)`.
pub fn std_normal_rows(tape: &mut Tape, v: NodeId) -> Result<NodeId, ModelError> {
    let sq = tape.square(v)?;
    let s = tape.sum_rows(sq)?;
    let s = tape.scale(s, -0.5)?;
    let d = tape.value(v).cols() as f64;
    Ok(tape.add_scalar(s, -HALF_LN_2PI * d)?)
}

fn normal_lp(v: &[f64], mean: &[f64], sd: &[f64]) -> f64 {
    v.iter()
        .zip(mean)
        .zip(sd)
        .map(|((&v, &m), &s)| {
            let u = (v - m) / s;
            -HALF_LN_2PI - s.ln() - 0.5 * u * u
        })
        .sum()
}

pub struct EncoderAt<'a> {
    vae: &'a MiniVae,
    store: &'a ParamStore,
    projection: Vec<f64>,
}

impl EncoderAt<'_> {
    pub fn params(&self, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let raw = self.vae.encoder.mlp.forward_projected(self.store, &self.projection, psi);
        self.vae.encoder.params_from_raw(&raw)
    }
}

impl HierarchicalModel for EncoderAt<'_> {
    fn sample_psi(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.vae.shape.psi_dim).map(|_| rng.normal()).collect()
    }

    fn sample_z_given_psi(&self, psi: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let (m, s) = self.params(psi);
        m.iter().zip(&s).map(|(m, s)| m + s * rng.normal()).collect()
    }

    fn log_psi_prior(&self, psi: &[f64]) -> f64 {
        std_normal_lp(psi)
    }

    fn log_z_given_psi(&self, z: &[f64], psi: &[f64]) -> f64 {
        let (m, s) = self.params(psi);
        normal_lp(z, &m, &s)
    }
}

pub struct TauAt<'a> {
    vae: &'a MiniVae,
    store: &'a ParamStore,
    projection: Vec<f64>,
}

impl TauAt<'_> {
    pub fn params(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let raw = self.vae.tau.mlp.forward_projected(self.store, &self.projection, z);
        self.vae.tau.params_from_raw(&raw)
    }
}

impl AuxiliaryInference for TauAt<'_> {
    fn log_prob(&self, psi: &[f64], z: &[f64]) -> f64 {
        let (m, s) = self.params(z);
        normal_lp(psi, &m, &s)
    }

    fn sample(&self, z: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let (m, s) = self.params(z);
        m.iter().zip(&s).map(|(m, s)| m + s * rng.normal()).collect()
    }
}

pub struct LikelihoodAt<'a> {
    vae: &'a MiniVae,
    store: &'a ParamStore,
    x: &'a [f64],
}

impl Likelihood for LikelihoodAt<'_> {
    fn log_likelihood(&self, z: &[f64]) -> f64 {
        let logits = self.vae.decoder.forward(self.store, z, &[]);
        logits
            .iter()
            .zip(self.x)
            .map(|(&l, &x)| x * l - softplus(l))
            .sum()
    }
}

/// `p(z) = N(0, I)`.
pub struct StandardNormalPrior;

impl ExplicitPrior for StandardNormalPrior {
    fn log_prob(&self, z: &[f64]) -> f64 {
        std_normal_lp(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (MiniVae, ParamStore) {
        let vae = make_mini_vae(VaeShape {
            input_dim: 6,
            z_dim: 2,
            psi_dim: 3,
            hidden: vec![5],
            encoder_gate: None,
        })
        .unwrap();
        let mut store = ParamStore::new();
        vae.init(&mut store, &mut RngStream::new(2));
        (vae, store)
    }

    #[test]
    fn tape_pass_matches_plain_views() {
        let (vae, store) = small();
        let xs = Tensor::new(2, 6, vec![0., 1., 1., 0., 1., 0., 1., 1., 0., 0., 0., 1.]);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.leaf(xs.clone());
        let nodes = vae.iwhvi_tape(&mut tape, &p, x, 3, &mut RngStream::new(5)).unwrap();
        let (z, psi) = (tape.value(nodes.z).clone(), tape.value(nodes.psi).clone());
        for row in 0..2 {
            let xr = xs.row_slice(row);
            let enc = vae.encoder_at(&store, xr);
            let tau = vae.tau_at(&store, xr);
            let zr = z.row_slice(row);
            for k in 0..4 {
                let pk = psi.row_slice(k * 2 + row);
                let lq = enc.log_z_given_psi(zr, pk);
                assert!((lq - tape.value(nodes.log_q_cond).get(row, k)).abs() < 1e-10);
                let r = enc.log_psi_prior(pk) - tau.log_prob(pk, zr);
                assert!((r - tape.value(nodes.log_psi_ratio).get(row, k)).abs() < 1e-10);
            }
            let ll = vae.likelihood_at(&store, xr).log_likelihood(zr);
            assert!((ll - tape.value(nodes.log_lik).get(row, 0)).abs() < 1e-10);
        }
    }
}
