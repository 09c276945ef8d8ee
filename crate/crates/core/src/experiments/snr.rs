//! Gradient signal-to-noise on the linear-Gaussian toy task: an upper bound
//! on `E_q(x) log q(x)` with `τ(z | x) = N(Ax + b, 2/3)`.

use super::record::RunRecord;
use super::{ExperimentConfig, ExperimentError};
use crate::autodiff::{ParamStore, Tensor};
use crate::grad::{grad_tau, measure_snr, Estimator, SnrReport, TauDraw, TauObjective, TauTape};
use crate::models::{make_snr_task, GaussianHierarchy, HierarchicalModel, LinearTauNet, SNR_DIM, SNR_TAU_VAR};
use crate::optim::{Adam, AdamConfig};
use crate::rng::RngStream;
use std::time::Instant;

const NAME: &str = "snr";

/// The gradient estimators compared: vanilla and DReG gradients of `U_K`,
/// DReG without its `ψ₀` term (biased), and the IWAE-style `L_K` gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnrEstimator {
    Autodiff,
    Dreg,
    DregNoB,
    Iwae,
}

impl SnrEstimator {
    pub const ALL: [SnrEstimator; 4] = [Self::Autodiff, Self::Dreg, Self::DregNoB, Self::Iwae];

    pub fn name(self) -> &'static str {
        match self {
            Self::Autodiff => "autodiff",
            Self::Dreg => "dreg",
            Self::DregNoB => "dreg_no_b",
            Self::Iwae => "iwae",
        }
    }
}

fn draw_batch(model: &GaussianHierarchy, batch: usize, rng: &mut RngStream) -> TauDraw {
    let mut xs = Vec::with_capacity(batch * SNR_DIM);
    let mut zs = Vec::with_capacity(batch * SNR_DIM);
    for _ in 0..batch {
        let (x, z) = model.sample_joint(rng);
        xs.extend(x);
        zs.extend(z);
    }
    TauDraw {
        z: Tensor::new(batch, SNR_DIM, xs),
        psi0: Tensor::new(batch, SNR_DIM, zs),
        log_p: vec![0.0; batch],
    }
}

/// One minibatch gradient (all of `A` then `b`, block-name order).
pub fn snr_gradient(
    model: &GaussianHierarchy,
    net: &LinearTauNet,
    store: &ParamStore,
    k: usize,
    estimator: SnrEstimator,
    batch: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>, ExperimentError> {
    let draw = draw_batch(model, batch, rng);
    let problem = TauTape { q: model, tau: net, k };
    let (objective, est, include_b) = match estimator {
        SnrEstimator::Autodiff => (TauObjective::Upper, Estimator::Autodiff, true),
        SnrEstimator::Dreg => (TauObjective::Upper, Estimator::IwhviDreg, true),
        SnrEstimator::DregNoB => (TauObjective::Upper, Estimator::IwhviDreg, false),
        SnrEstimator::Iwae => (TauObjective::Lower, Estimator::Autodiff, true),
    };
    Ok(grad_tau(store, problem, &draw, objective, est, include_b, rng)?.flat())
}

/// Trains `A, b` from the identity start by minimizing `U_K` at
/// `cfg.train_k`; returns the parameters.
pub fn train_snr_tau(cfg: &ExperimentConfig, rng: &mut RngStream) -> Result<(LinearTauNet, ParamStore), ExperimentError> {
    let (model, init) = make_snr_task();
    let net = LinearTauNet::new("tau", SNR_DIM, SNR_TAU_VAR);
    let mut store = ParamStore::new();
    net.init_from(&mut store, &init);
    let o = &cfg.optimizer;
    let mut opt = Adam::new(AdamConfig {
        learning_rate: o.learning_rate,
        beta1: o.beta1,
        beta2: o.beta2,
        amsgrad: o.amsgrad,
        ..AdamConfig::default()
    });
    for _ in 0..o.steps {
        let draw = draw_batch(&model, o.batch_size, rng);
        let problem = TauTape {
            q: &model,
            tau: &net,
            k: cfg.train_k,
        };
        let g = grad_tau(&store, problem, &draw, TauObjective::Upper, cfg.estimator, true, rng)?;
        store.zero_grad();
        g.accumulate_into(&mut store, 1.0);
        opt.step(&mut store);
    }
    Ok((net, store))
}

/// Largest per-parameter `|mean_a - mean_b| / sqrt(se_a² + se_b²)`.
pub fn max_mean_z(a: &SnrReport, b: &SnrReport) -> f64 {
    let (ra, rb) = (a.replicates as f64, b.replicates as f64);
    a.means
        .iter()
        .zip(&b.means)
        .zip(a.stds.iter().zip(&b.stds))
        .map(|((ma, mb), (sa, sb))| {
            let se = (sa * sa / ra + sb * sb / rb).sqrt();
            if se > 0.0 {
                (ma - mb).abs() / se
            } else if ma == mb {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// SNR reports per K of the sweep, in [`SnrEstimator::ALL`] order.
pub type SnrSweep = Vec<(usize, Vec<SnrReport>)>;

pub fn snr_sweep(cfg: &ExperimentConfig, net: &LinearTauNet, store: &ParamStore) -> Result<SnrSweep, ExperimentError> {
    let (model, _) = make_snr_task();
    let mut out = Vec::new();
    for k in cfg.ks() {
        let mut reports = Vec::new();
        for est in SnrEstimator::ALL {
            if est == SnrEstimator::Iwae && k == 0 {
                continue;
            }
            // every estimator sees the same minibatches
            let seed = RngStream::derive(cfg.seed, 1 + k as u64).next_u64();
            let grad = |_: usize, rng: &mut RngStream| {
                snr_gradient(&model, net, store, k, est, cfg.optimizer.batch_size, rng)
            };
            reports.push(measure_snr(grad, cfg.replicates.max(2), seed)?);
        }
        out.push((k, reports));
    }
    Ok(out)
}

pub fn run_snr(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    let start = Instant::now();
    let mut rng = RngStream::derive(cfg.seed, 0);
    let (net, store) = train_snr_tau(cfg, &mut rng)?;
    let tau = net.to_tau(&store);
    let d = SNR_DIM;
    let a_err = (0..d * d)
        .map(|i| (tau.a[i] - if i % (d + 1) == 0 { 0.5 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let b_err = tau.b.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    let est = cfg.estimator.name();
    let steps = cfg.optimizer.steps;
    let mut out = vec![
        RunRecord::new(NAME, cfg.seed, steps, cfg.train_k, 1, est, "a_max_error", a_err),
        RunRecord::new(NAME, cfg.seed, steps, cfg.train_k, 1, est, "b_max_error", b_err),
    ];
    for (k, reports) in snr_sweep(cfg, &net, &store)? {
        for (report, e) in reports.iter().zip(SnrEstimator::ALL) {
            let row = |metric: &str, v: f64| {
                let mut r = RunRecord::new(NAME, cfg.seed, steps, k, 1, e.name(), metric, v);
                r.wall_ms = start.elapsed().as_millis() as u64;
                r
            };
            out.push(row("snr_mean", report.mean).with_ci(report.p5.min(report.mean), report.p95.max(report.mean)));
            out.push(row("snr_mean_se", report.mean_se));
        }
        out.push(RunRecord::new(
            NAME,
            cfg.seed,
            steps,
            k,
            1,
            "dreg",
            "max_mean_z_vs_autodiff",
            max_mean_z(&reports[1], &reports[0]),
        ));
        out.push(RunRecord::new(
            NAME,
            cfg.seed,
            steps,
            k,
            1,
            "dreg_no_b",
            "max_mean_z_vs_autodiff",
            max_mean_z(&reports[2], &reports[0]),
        ));
    }
    Ok(out)
}
