//! Gradient estimators for `τ`'s parameters: plain reparameterized autodiff
//! through a bound, and the doubly reparameterized IWHVI-DReG estimator.
//! [`measure_snr`] reports per-parameter signal-to-noise ratios over
//! independent replicates.

mod dreg;
mod snr;

pub use dreg::{dreg_coefficients, dreg_surrogate, objective_tape, TauDraw, TauObjective, TauTape};
pub use snr::{measure_snr, SnrReport};
pub(crate) use snr::quantile;

use crate::autodiff::{AutodiffError, Bindings, NodeId, ParamStore, Tape, Tensor};
use crate::distributions::DistributionError;
use crate::models::{ModelError, TapeAuxiliary, TapeJoint};
use crate::rng::RngStream;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("non-finite gradient in block `{0}`")]
    NonFinite(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    Autodiff,
    IwhviDreg,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Autodiff => "autodiff",
            Self::IwhviDreg => "dreg",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "autodiff" => Ok(Self::Autodiff),
            "dreg" | "iwhvi_dreg" | "iwhvi-dreg" => Ok(Self::IwhviDreg),
            other => Err(format!("unknown estimator '{other}' (expected autodiff or dreg)")),
        }
    }
}

/// Gradients for every bound parameter block, shaped like the blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct GradEstimate {
    pub blocks: BTreeMap<String, Tensor>,
    pub estimator: Estimator,
    pub replicates: usize,
}

impl GradEstimate {
    fn collect(
        params: &ParamStore,
        bindings: &Bindings,
        tape: &Tape,
        output: NodeId,
        estimator: Estimator,
    ) -> Result<Self, GradError> {
        let grads = tape.backward(output)?;
        let mut blocks = BTreeMap::new();
        for (name, id) in bindings.iter() {
            let g = grads.get_or_zeros(id, params.value(name));
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(GradError::NonFinite(name.to_string()));
            }
            blocks.insert(name.to_string(), g);
        }
        Ok(Self {
            blocks,
            estimator,
            replicates: 1,
        })
    }

    /// All entries in block-name order (the [`ParamStore`] order).
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Adds the gradients into `params`' accumulators, times `scale`.
    pub fn accumulate_into(&self, params: &mut ParamStore, scale: f64) {
        for (name, block) in params.iter_mut() {
            if let Some(g) = self.blocks.get(name) {
                for (acc, v) in block.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += scale * v;
                }
            }
        }
    }
}

/// One forward and backward pass through `objective`, which records its
/// value on the tape from the bound parameters.
pub fn grad_autodiff(
    params: &ParamStore,
    rng: &mut RngStream,
    objective: impl FnOnce(&mut Tape, &Bindings, &mut RngStream) -> Result<NodeId, GradError>,
) -> Result<GradEstimate, GradError> {
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape);
    let out = objective(&mut tape, &bindings, rng)?;
    GradEstimate::collect(params, &bindings, &tape, out, Estimator::Autodiff)
}

/// Gradient of a `τ` objective with the chosen estimator. Objectives are
/// oriented as written: `Upper` is `U_K` (to be minimized), `Iwhvi` and
/// `Lower` are lower bounds (to be maximized). DReG exists for `Upper` and
/// `Iwhvi`; `include_b = false` drops the `ψ₀` score term (biased).
pub fn grad_tau(
    params: &ParamStore,
    problem: TauTape,
    draw: &TauDraw,
    objective: TauObjective,
    estimator: Estimator,
    include_b: bool,
    rng: &mut RngStream,
) -> Result<GradEstimate, GradError> {
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape);
    let out = match estimator {
        Estimator::Autodiff => objective_tape(&mut tape, &bindings, problem, draw, objective, rng)?,
        Estimator::IwhviDreg => dreg_surrogate(&mut tape, &bindings, problem, draw, objective, include_b, rng)?,
    };
    GradEstimate::collect(params, &bindings, &tape, out, estimator)
}

/// IWHVI-DReG gradient for `τ` with an explicit prior: `draw.log_p` holds
/// `log p(x, z)` per row, rows grouped `M` at a time.
pub fn grad_iwhvi_dreg(
    params: &ParamStore,
    q: &dyn TapeJoint,
    tau: &dyn TapeAuxiliary,
    draw: &TauDraw,
    m: usize,
    k: usize,
    rng: &mut RngStream,
) -> Result<GradEstimate, GradError> {
    grad_tau(
        params,
        TauTape { q, tau, k },
        draw,
        TauObjective::Iwhvi { m },
        Estimator::IwhviDreg,
        true,
        rng,
    )
}
