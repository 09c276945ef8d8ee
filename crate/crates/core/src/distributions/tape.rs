use super::spec::standard_laplace;
use super::{gamma, DistributionError, Result};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::rng::RngStream;
use std::f64::consts::{LN_2, PI};

/// A factorized distribution whose parameters are tape nodes. All
/// operations are elementwise; a row of the parameter tensors is one
/// multivariate distribution and its log-density is the row sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TapeDist {
    Normal { mean: NodeId, stddev: NodeId },
    Laplace { location: NodeId, scale: NodeId },
    Exponential { rate: NodeId },
    Gamma { concentration: NodeId, rate: NodeId },
    /// Bernoulli parameterized by logits for numerical stability.
    BernoulliLogits { logits: NodeId },
}

impl TapeDist {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Normal { .. } => "Normal",
            Self::Laplace { .. } => "Laplace",
            Self::Exponential { .. } => "Exponential",
            Self::Gamma { .. } => "Gamma",
            Self::BernoulliLogits { .. } => "Bernoulli",
        }
    }

    fn params(&self) -> Vec<NodeId> {
        match *self {
            Self::Normal { mean, stddev } => vec![mean, stddev],
            Self::Laplace { location, scale } => vec![location, scale],
            Self::Exponential { rate } => vec![rate],
            Self::Gamma { concentration, rate } => vec![concentration, rate],
            Self::BernoulliLogits { logits } => vec![logits],
        }
    }

    /// Broadcast shape of the parameter tensors.
    pub fn shape(&self, tape: &Tape) -> (usize, usize) {
        self.params().iter().fold((1, 1), |(r, c), &p| {
            let (pr, pc) = tape.value(p).shape();
            (r.max(pr), c.max(pc))
        })
    }

    /// Copy whose parameters are cut from the gradient graph.
    pub fn freeze(&self, tape: &mut Tape) -> Result<Self> {
        Ok(match *self {
            Self::Normal { mean, stddev } => Self::Normal {
                mean: tape.stop_gradient(mean)?,
                stddev: tape.stop_gradient(stddev)?,
            },
            Self::Laplace { location, scale } => Self::Laplace {
                location: tape.stop_gradient(location)?,
                scale: tape.stop_gradient(scale)?,
            },
            Self::Exponential { rate } => Self::Exponential {
                rate: tape.stop_gradient(rate)?,
            },
            Self::Gamma { concentration, rate } => Self::Gamma {
                concentration: tape.stop_gradient(concentration)?,
                rate: tape.stop_gradient(rate)?,
            },
            Self::BernoulliLogits { logits } => Self::BernoulliLogits {
                logits: tape.stop_gradient(logits)?,
            },
        })
    }

    /// Elementwise log-density of `value`.
    pub fn log_prob(&self, tape: &mut Tape, value: NodeId) -> Result<NodeId> {
        Ok(match *self {
            Self::Normal { mean, stddev } => {
                let diff = tape.sub(value, mean)?;
                let u = tape.div(diff, stddev)?;
                let u2 = tape.square(u)?;
                let quad = tape.scale(u2, -0.5)?;
                let log_sd = tape.log(stddev)?;
                let t = tape.sub(quad, log_sd)?;
                tape.add_scalar(t, -0.5 * (2.0 * PI).ln())?
            }
            Self::Laplace { location, scale } => {
                let diff = tape.sub(value, location)?;
                let a = tape.abs(diff)?;
                let r = tape.div(a, scale)?;
                let log_s = tape.log(scale)?;
                let t = tape.add(r, log_s)?;
                let n = tape.neg(t)?;
                tape.add_scalar(n, -LN_2)?
            }
            Self::Exponential { rate } => {
                if let Some(&bad) = tape.value(value).data().iter().find(|&&v| v < 0.0) {
                    return Err(DistributionError::OutsideSupport {
                        kind: "Exponential",
                        value: bad,
                    });
                }
                let log_r = tape.log(rate)?;
                let rx = tape.mul(rate, value)?;
                tape.sub(log_r, rx)?
            }
            Self::Gamma { concentration, rate } => {
                if let Some(&bad) = tape.value(value).data().iter().find(|&&v| v <= 0.0) {
                    return Err(DistributionError::OutsideSupport { kind: "Gamma", value: bad });
                }
                let log_r = tape.log(rate)?;
                let a_log_r = tape.mul(concentration, log_r)?;
                let lg = tape.lgamma(concentration)?;
                let log_x = tape.log(value)?;
                let am1 = tape.add_scalar(concentration, -1.0)?;
                let t1 = tape.mul(am1, log_x)?;
                let rx = tape.mul(rate, value)?;
                let s = tape.sub(a_log_r, lg)?;
                let s = tape.add(s, t1)?;
                tape.sub(s, rx)?
            }
            Self::BernoulliLogits { logits } => {
                let xl = tape.mul(value, logits)?;
                let sp = tape.softplus(logits)?;
                tape.sub(xl, sp)?
            }
        })
    }

    /// Row sums of [`log_prob`](Self::log_prob): joint log-density per row.
    pub fn log_prob_rows(&self, tape: &mut Tape, value: NodeId) -> Result<NodeId> {
        let lp = self.log_prob(tape, value)?;
        Ok(tape.sum_rows(lp)?)
    }

    /// Pathwise-differentiable draw shaped like the parameters. Noise is
    /// consumed in row-major order: Normal 2 uniforms per element, Laplace
    /// and Exponential 1, Gamma variable.
    pub fn sample_reparam(&self, tape: &mut Tape, rng: &mut RngStream) -> Result<NodeId> {
        let (rows, cols) = self.shape(tape);
        Ok(match *self {
            Self::Normal { mean, stddev } => {
                let eps = tape.leaf(Tensor::from_fn(rows, cols, |_, _| rng.normal()));
                let s = tape.mul(stddev, eps)?;
                tape.add(mean, s)?
            }
            Self::Laplace { location, scale } => {
                let eps = tape.leaf(Tensor::from_fn(rows, cols, |_, _| standard_laplace(rng.uniform())));
                let s = tape.mul(scale, eps)?;
                tape.add(location, s)?
            }
            Self::Exponential { rate } => {
                let e = tape.leaf(Tensor::from_fn(rows, cols, |_, _| -rng.uniform().ln()));
                tape.div(e, rate)?
            }
            Self::Gamma { concentration, rate } => {
                let (a, b) = (tape.value(concentration).clone(), tape.value(rate).clone());
                let mut value = Tensor::zeros(rows, cols);
                let mut da = Tensor::zeros(rows, cols);
                let mut db = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        let (ai, bi) = (a.bget(i, j), b.bget(i, j));
                        let s = (gamma::sample_standard(ai, rng) / bi).max(f64::MIN_POSITIVE);
                        let (ga, gb) = gamma::implicit_grad(ai, bi, s);
                        value.set(i, j, s);
                        da.set(i, j, ga);
                        db.set(i, j, gb);
                    }
                }
                tape.implicit(&[concentration, rate], value, vec![da, db])?
            }
            Self::BernoulliLogits { .. } => {
                return Err(DistributionError::UnsupportedKind {
                    kind: "Bernoulli",
                    operation: "sample_reparam",
                })
            }
        })
    }

    /// Forward-only draw (no pathwise derivative), as a plain tensor.
    pub fn sample_detached(&self, tape: &Tape, rng: &mut RngStream) -> Tensor {
        let (rows, cols) = self.shape(tape);
        match *self {
            Self::Normal { mean, stddev } => {
                let (m, s) = (tape.value(mean), tape.value(stddev));
                Tensor::from_fn(rows, cols, |i, j| m.bget(i, j) + s.bget(i, j) * rng.normal())
            }
            Self::Laplace { location, scale } => {
                let (m, s) = (tape.value(location), tape.value(scale));
                Tensor::from_fn(rows, cols, |i, j| m.bget(i, j) + s.bget(i, j) * standard_laplace(rng.uniform()))
            }
            Self::Exponential { rate } => {
                let r = tape.value(rate);
                Tensor::from_fn(rows, cols, |i, j| -rng.uniform().ln() / r.bget(i, j))
            }
            Self::Gamma { concentration, rate } => {
                let (a, b) = (tape.value(concentration), tape.value(rate));
                Tensor::from_fn(rows, cols, |i, j| {
                    (gamma::sample_standard(a.bget(i, j), rng) / b.bget(i, j)).max(f64::MIN_POSITIVE)
                })
            }
            Self::BernoulliLogits { logits } => {
                let l = tape.value(logits);
                Tensor::from_fn(rows, cols, |i, j| {
                    (rng.uniform() < crate::autodiff::sigmoid(l.bget(i, j))) as u8 as f64
                })
            }
        }
    }
}
