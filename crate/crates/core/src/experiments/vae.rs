//! Desk-scale hierarchical VAE on binarized MNIST: training under a K
//! schedule and bound evaluation sweeps.

use super::idx::load_idx;
use super::record::{mean_se, summary_row, RunRecord};
use super::{warmup_weight, Binarization, ExperimentConfig, ExperimentError};
use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::bounds::{eval_variant, log_mean_exp, BoundConfig, Variant};
use crate::grad::dreg_coefficients;
use crate::models::checkpoint;
use crate::models::{
    k_major_to_rows, make_mini_vae, std_normal_rows, tile, Generative, HierarchicalModel, LatentPrior, MiniVae,
    StandardNormalPrior, VaeShape,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::RngStream;
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

pub const IMAGES_FILE: &str = "train-images-idx3-ubyte";
/// Seed of the validation binarization, shared by every run so that
/// evaluations of different models see identical data.
const VALID_SEED: u64 = 0x5eed_0da7a;

/// Grey-level images in `[0, 1]`: the first `subset_size` images of the IDX
/// file, the last tenth of them held out for validation.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeData {
    pub train: Vec<Vec<f64>>,
    pub valid: Vec<Vec<f64>>,
}

pub fn load_vae_data(cfg: &ExperimentConfig) -> Result<VaeData, ExperimentError> {
    let images = load_idx(&cfg.data.path.join(IMAGES_FILE))?;
    let n = cfg.data.subset_size;
    if n > images.len() {
        return Err(ExperimentError::Config(format!(
            "subset_size {n} exceeds the {} available images",
            images.len()
        )));
    }
    if images.item_size() != 784 {
        return Err(ExperimentError::Config(format!("expected 28x28 images, got {:?}", images.dims)));
    }
    let n_valid = n / 10;
    let all: Vec<Vec<f64>> = (0..n).map(|i| images.scaled(i)).collect();
    Ok(VaeData {
        train: all[..n - n_valid].to_vec(),
        valid: all[n - n_valid..].to_vec(),
    })
}

pub fn binarize(x: &[f64], rng: &mut RngStream) -> Vec<f64> {
    x.iter().map(|&p| f64::from(u8::from(rng.uniform() < p))).collect()
}

/// The binarized validation set used by every evaluation.
pub fn validation_set(data: &VaeData) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(VALID_SEED);
    data.valid.iter().map(|x| binarize(x, &mut rng)).collect()
}

pub fn build_vae(cfg: &ExperimentConfig) -> Result<MiniVae, ExperimentError> {
    let mut vae = make_mini_vae(VaeShape {
        input_dim: 784,
        z_dim: cfg.z_dim,
        psi_dim: cfg.psi_dim,
        hidden: cfg.hidden.clone(),
        encoder_gate: None,
    })?;
    vae.tau = vae.tau.with_gate_init(cfg.gate_init);
    Ok(vae)
}

fn rows_tensor(rows: &[&Vec<f64>]) -> Tensor {
    let d = rows[0].len();
    Tensor::new(rows.len(), d, rows.iter().flat_map(|r| r.iter().copied()).collect())
}

/// Per-row IWHVI values at unit warm-up weights.
fn iwhvi_rows(lik: &Tensor, prior: &Tensor, lq: &Tensor, ratio: &Tensor) -> Vec<f64> {
    (0..lik.rows())
        .map(|r| {
            let w: Vec<f64> = lq.row_slice(r).iter().zip(ratio.row_slice(r)).map(|(a, b)| a + b).collect();
            lik.get(r, 0) + prior.get(r, 0) - log_mean_exp(&w)
        })
        .collect()
}

/// One gradient step's worth of IWHVI (M = 1) on a batch: the objective
/// `log p(x|z) + w_out (log p(z) - LME_k[log q(z|ψ_k) + w_in (log q(ψ_k) - log τ(ψ_k|z,x))])`
/// is maximized; gradients (of its negated batch mean) are accumulated into
/// `store`. Returns the per-row bound at unit weights.
pub fn accumulate_iwhvi_grad(
    vae: &MiniVae,
    store: &mut ParamStore,
    batch: &Tensor,
    k: usize,
    w_in: f64,
    w_out: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>, ExperimentError> {
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.leaf(batch.clone());
    let n = vae.iwhvi_tape(&mut tape, &p, x, k, rng)?;
    let ratio = tape.scale(n.log_psi_ratio, w_in)?;
    let inner = tape.add(n.log_q_cond, ratio)?;
    let lme = tape.logmeanexp_rows(inner)?;
    let kl = tape.sub(n.log_prior, lme)?;
    let kl = tape.scale(kl, w_out)?;
    let rows = tape.add(n.log_lik, kl)?;
    let obj = tape.mean(rows)?;
    let values = iwhvi_rows(
        tape.value(n.log_lik),
        tape.value(n.log_prior),
        tape.value(n.log_q_cond),
        tape.value(n.log_psi_ratio),
    );
    let grads = tape.backward(obj)?;
    store.accumulate(&p, &grads, -1.0);
    Ok(values)
}

/// Replaces the accumulated gradients of `τ`'s blocks by the IWHVI-DReG
/// estimate (M = 1) from a fresh draw, scaled by `w_out`.
pub fn replace_tau_grad_with_dreg(
    vae: &MiniVae,
    store: &mut ParamStore,
    batch: &Tensor,
    k: usize,
    w_out: f64,
    rng: &mut RngStream,
) -> Result<(), ExperimentError> {
    let prefix = format!("{}.", vae.tau.mlp.name);
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.leaf(batch.clone());
    let b = batch.rows();
    let dpsi = vae.shape.psi_dim;
    let psi0 = tape.leaf(Tensor::from_fn(b, dpsi, |_, _| rng.normal()));
    let enc0 = vae.encoder.dist_tape(&mut tape, &p, x, Some(psi0))?;
    let z = enc0.sample_reparam(&mut tape, rng)?;
    let z = tape.stop_gradient(z)?;
    let tau = vae.tau.dist_tape(&mut tape, &p, x, Some(z))?;
    let lq0 = enc0.log_prob_rows(&mut tape, z)?;
    let lpsi0 = std_normal_rows(&mut tape, psi0)?;
    let lq0 = tape.add(lq0, lpsi0)?;
    let log_tau0 = tau.log_prob_rows(&mut tape, psi0)?;
    let mut lw = Tensor::from_fn(b, k + 1, |r, _| tape.value(lq0).get(r, 0) - tape.value(log_tau0).get(r, 0));
    let mut beta = None;
    if k > 0 {
        let tiled = tile(&mut tape, tau, k)?;
        let psik = tiled.sample_reparam(&mut tape, rng)?;
        let zk = tape.repeat_rows(z, k)?;
        let enck = vae.encoder.dist_tape(&mut tape, &p, x, Some(psik))?;
        let lqk = enck.log_prob_rows(&mut tape, zk)?;
        let lpk = std_normal_rows(&mut tape, psik)?;
        let lqk = tape.add(lqk, lpk)?;
        let frozen = tiled.freeze(&mut tape)?;
        let ltk = frozen.log_prob_rows(&mut tape, psik)?;
        let bt = tape.sub(lqk, ltk)?;
        let bt = k_major_to_rows(&mut tape, bt, k)?;
        for r in 0..b {
            for j in 0..k {
                lw.set(r, j + 1, tape.value(bt).get(r, j));
            }
        }
        beta = Some(bt);
    }
    let logits = vae.decoder.forward_tape(&mut tape, &p, z, None)?;
    let lik = crate::distributions::TapeDist::BernoulliLogits { logits }.log_prob_rows(&mut tape, x)?;
    let prior = std_normal_rows(&mut tape, z)?;
    let log_p: Vec<f64> = (0..b)
        .map(|r| tape.value(lik).get(r, 0) + tape.value(prior).get(r, 0))
        .collect();
    let (ck, c0) = dreg_coefficients(&lw, &log_p, 1);
    let c0 = tape.leaf(Tensor::column(c0));
    let s0 = tape.mul(c0, log_tau0)?;
    let mut total = tape.sum(s0)?;
    if let Some(bt) = beta {
        let ck = tape.leaf(ck);
        let sk = tape.mul(ck, bt)?;
        let sk = tape.sum(sk)?;
        total = tape.add(total, sk)?;
    }
    let total = tape.scale(total, 1.0 / b as f64)?;
    let grads = tape.backward(total)?;
    for (name, block) in store.iter_mut() {
        if !name.starts_with(&prefix) {
            continue;
        }
        let g = grads.get_or_zeros(p.get(name), &block.value);
        // DReG gives the gradient of the bound; the store holds its negation
        for (acc, v) in block.grad.data_mut().iter_mut().zip(g.data()) {
            *acc = -w_out * v;
        }
    }
    Ok(())
}

/// Per-epoch training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub k: usize,
    pub train_bound: f64,
    pub wall_ms: u64,
}

fn adam_for(cfg: &ExperimentConfig) -> Adam {
    let o = &cfg.optimizer;
    Adam::new(AdamConfig {
        learning_rate: o.learning_rate,
        beta1: o.beta1,
        beta2: o.beta2,
        amsgrad: o.amsgrad,
        ..AdamConfig::default()
    })
}

/// Trains a fresh model; the run seed drives initialisation, shuffling,
/// binarization and every Monte Carlo draw.
pub fn train_vae(cfg: &ExperimentConfig, data: &VaeData) -> Result<(MiniVae, ParamStore, Vec<EpochLog>), ExperimentError> {
    let start = Instant::now();
    let vae = build_vae(cfg)?;
    let mut root = RngStream::derive(cfg.seed, 0x7a1e);
    let mut store = ParamStore::new();
    vae.init(&mut store, &mut root.split(0));
    let mut rng = root.split(1);
    let mut adam = adam_for(cfg);
    let fixed: Option<Vec<Vec<f64>>> = match cfg.data.binarization {
        Binarization::Fixed => {
            let mut r = root.split(2);
            Some(data.train.iter().map(|x| binarize(x, &mut r)).collect())
        }
        Binarization::Dynamic => None,
    };
    let bs = cfg.optimizer.batch_size;
    let mut logs = Vec::new();
    for epoch in 0..cfg.optimizer.epochs {
        let k = cfg.k_at(epoch);
        let w_in = warmup_weight(epoch, cfg.warmup.inner_kl);
        let w_out = warmup_weight(epoch, cfg.warmup.outer_kl);
        let lr = cfg.optimizer.rate_at(epoch);
        let images: Vec<Vec<f64>> = match &fixed {
            Some(f) => f.clone(),
            None => data.train.iter().map(|x| binarize(x, &mut rng)).collect(),
        };
        let mut order: Vec<usize> = (0..images.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(bs) {
            let rows: Vec<&Vec<f64>> = chunk.iter().map(|&i| &images[i]).collect();
            let batch = rows_tensor(&rows);
            store.zero_grad();
            let values = accumulate_iwhvi_grad(&vae, &mut store, &batch, k, w_in, w_out, &mut rng)?;
            if cfg.estimator == crate::grad::Estimator::IwhviDreg && w_in == 1.0 {
                replace_tau_grad_with_dreg(&vae, &mut store, &batch, k, w_out, &mut rng)?;
            }
            if store.iter().any(|(_, b)| b.grad.data().iter().any(|v| !v.is_finite())) {
                return Err(ExperimentError::Numerical(format!("non-finite gradient in epoch {epoch}")));
            }
            adam.step_with_lr(&mut store, lr);
            total += values.iter().sum::<f64>();
        }
        logs.push(EpochLog {
            epoch,
            k,
            train_bound: total / images.len() as f64,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok((vae, store, logs))
}

/// Mean IWHVI (M = 1) over `images` at the given K, one draw per image.
pub fn mean_iwhvi(vae: &MiniVae, store: &ParamStore, images: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Result<f64, ExperimentError> {
    let mut total = 0.0;
    for chunk in images.chunks(100) {
        let rows: Vec<&Vec<f64>> = chunk.iter().collect();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.leaf(rows_tensor(&rows));
        let n = vae.iwhvi_tape(&mut tape, &p, x, k, rng)?;
        let v = iwhvi_rows(
            tape.value(n.log_lik),
            tape.value(n.log_prior),
            tape.value(n.log_q_cond),
            tape.value(n.log_psi_ratio),
        );
        total += v.iter().sum::<f64>();
    }
    Ok(total / images.len() as f64)
}

/// Mean over `images` of `KL(τ(ψ | z, x) ‖ N(0, I))` in closed form, with
/// one `z ~ q(z | x)` per image. Near zero means `τ` collapsed onto `q(ψ)`.
pub fn mean_kl_tau_prior(vae: &MiniVae, store: &ParamStore, images: &[Vec<f64>], rng: &mut RngStream) -> f64 {
    let mut total = 0.0;
    for x in images {
        let enc = vae.encoder_at(store, x);
        let (z, _) = enc.sample_joint(rng);
        let (m, s) = vae.tau_at(store, x).params(&z);
        total += m
            .iter()
            .zip(&s)
            .map(|(m, s)| 0.5 * (s * s + m * m - 1.0) - s.ln())
            .sum::<f64>();
    }
    total / images.len() as f64
}

const TRAIN: &str = "vae-train";
const EVAL: &str = "vae-eval";

pub fn run_vae(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    let data = load_vae_data(cfg)?;
    let valid = validation_set(&data);
    let (vae, store, logs) = train_vae(cfg, &data)?;
    let est = cfg.estimator.name();
    let mut out = Vec::new();
    for log in &logs {
        let mut r = RunRecord::new(TRAIN, cfg.seed, log.epoch, log.k, 1, est, "train_iwhvi", log.train_bound);
        r.wall_ms = log.wall_ms;
        out.push(r);
    }
    let epochs = cfg.optimizer.epochs;
    let k_final = cfg.k_at(epochs.saturating_sub(1));
    let mut rng = RngStream::derive(cfg.seed, 0xe7a1);
    let v = mean_iwhvi(&vae, &store, &valid, k_final, &mut rng)?;
    out.push(RunRecord::new(TRAIN, cfg.seed, epochs, k_final, 1, est, "valid_iwhvi", v));
    let kl = mean_kl_tau_prior(&vae, &store, &valid, &mut rng);
    out.push(RunRecord::new(TRAIN, cfg.seed, epochs, k_final, 1, est, "kl_tau_prior", kl));
    if let Some(path) = &cfg.checkpoint {
        checkpoint::save(&store, path).map_err(|e| ExperimentError::Numerical(format!("saving checkpoint: {e}")))?;
    }
    Ok(out)
}

/// Loads a checkpoint and checks it against the configured architecture.
pub fn load_vae(cfg: &ExperimentConfig, path: &Path) -> Result<(MiniVae, ParamStore), ExperimentError> {
    let data_err = |offset: usize, message: String| ExperimentError::Data {
        file: path.display().to_string(),
        offset,
        message,
    };
    let store = checkpoint::load(path).map_err(|e| match e {
        checkpoint::CheckpointError::Truncated { offset }
        | checkpoint::CheckpointError::BadName { offset }
        | checkpoint::CheckpointError::BadRank { offset, .. } => data_err(offset, e.to_string()),
        checkpoint::CheckpointError::Io(io) => data_err(0, io.to_string()),
    })?;
    let vae = build_vae(cfg)?;
    let mut reference = ParamStore::new();
    vae.init(&mut reference, &mut RngStream::new(0));
    for (name, block) in reference.iter() {
        if !store.contains(name) || store.value(name).shape() != block.value.shape() {
            return Err(ExperimentError::Config(format!(
                "checkpoint does not match the configured architecture at block `{name}`"
            )));
        }
    }
    Ok((vae, store))
}

/// Fits `τ` alone for `steps` minibatches with `q` and `p` frozen.
pub fn refit_tau(
    cfg: &ExperimentConfig,
    vae: &MiniVae,
    store: &mut ParamStore,
    data: &VaeData,
    k: usize,
    steps: usize,
    rng: &mut RngStream,
) -> Result<(), ExperimentError> {
    let prefix = format!("{}.", vae.tau.mlp.name);
    let mut adam = adam_for(cfg);
    let bs = cfg.optimizer.batch_size.min(data.train.len());
    for _ in 0..steps {
        let idx: Vec<usize> = (0..bs).map(|_| (rng.next_u64() % data.train.len() as u64) as usize).collect();
        let imgs: Vec<Vec<f64>> = idx.iter().map(|&i| binarize(&data.train[i], rng)).collect();
        let rows: Vec<&Vec<f64>> = imgs.iter().collect();
        let batch = rows_tensor(&rows);
        store.zero_grad();
        accumulate_iwhvi_grad(vae, store, &batch, k, 1.0, 1.0, rng)?;
        if cfg.estimator == crate::grad::Estimator::IwhviDreg {
            replace_tau_grad_with_dreg(vae, store, &batch, k, 1.0, rng)?;
        }
        for (name, block) in store.iter_mut() {
            if !name.starts_with(&prefix) {
                block.grad = Tensor::zeros(block.grad.rows(), block.grad.cols());
            }
        }
        adam.step(store);
    }
    Ok(())
}

/// Mean over `images` of one `variant` estimate per image.
pub fn mean_bound(
    vae: &MiniVae,
    store: &ParamStore,
    images: &[Vec<f64>],
    config: &BoundConfig,
    rng: &mut RngStream,
) -> Result<f64, ExperimentError> {
    let prior = StandardNormalPrior;
    let mut total = 0.0;
    for x in images {
        let lik = vae.likelihood_at(store, x);
        let p = Generative {
            prior: LatentPrior::Explicit(&prior),
            likelihood: &lik,
        };
        let q = vae.encoder_at(store, x);
        let tau = vae.tau_at(store, x);
        total += eval_variant(config, &p, &q, &tau, rng)?.value;
    }
    Ok(total / images.len() as f64)
}

/// Evaluation sweep: per (variant, M, K), `replicates` independent runs of
/// the mean bound over the first `eval_images` validation images.
pub fn evaluate_sweep(
    cfg: &ExperimentConfig,
    vae: &MiniVae,
    store: &ParamStore,
    images: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<((Variant, usize, usize), Vec<f64>)>, ExperimentError> {
    let mut points = Vec::new();
    for v in &cfg.eval_variants {
        let variant: Variant = v.parse().map_err(|_| ExperimentError::Config(format!("unknown variant `{v}`")))?;
        for &m in &cfg.eval_ms() {
            for &k in &cfg.eval_ks() {
                points.push((variant, m, k));
            }
        }
    }
    points
        .into_par_iter()
        .map(|(variant, m, k)| {
            let single = matches!(variant, Variant::Iwhvi | Variant::Sivi | Variant::Dsivi | Variant::Elbo);
            let config = BoundConfig {
                m: if single { 1 } else { m },
                k: if variant == Variant::Hvm || variant == Variant::Elbo { 0 } else { k },
                l: 1,
                variant,
                jackknife_order: 0,
            };
            let runs = (0..cfg.replicates)
                .map(|r| {
                    // shared across variants at a point, so differences between
                    // variants at matched (M, K) use common random numbers
                    let mut rng = RngStream::derive(seed, ((m as u64) << 40) ^ ((k as u64) << 20) ^ r as u64);
                    mean_bound(vae, store, images, &config, &mut rng)
                })
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(((variant, config.m, config.k), runs))
        })
        .collect()
}

pub fn run_vae_eval(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    let path = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| ExperimentError::Config("vae-eval needs a checkpoint".into()))?;
    let (vae, mut store) = load_vae(cfg, &path)?;
    let data = load_vae_data(cfg)?;
    let valid = validation_set(&data);
    let images = &valid[..cfg.eval_images.min(valid.len())];
    let est = cfg.estimator.name();
    let mut out = Vec::new();
    let mut rng = RngStream::derive(cfg.seed, 0x4ef1);
    if cfg.refit_steps > 0 {
        let k = cfg.eval_ks().into_iter().max().unwrap_or(0);
        refit_tau(cfg, &vae, &mut store, &data, k, cfg.refit_steps, &mut rng)?;
        let kl = mean_kl_tau_prior(&vae, &store, images, &mut rng);
        out.push(RunRecord::new(EVAL, cfg.seed, cfg.refit_steps, k, 1, est, "refit_kl_tau_prior", kl));
    }
    let sweep = evaluate_sweep(cfg, &vae, &store, images, rng.next_u64())?;
    for ((variant, m, k), runs) in sweep {
        let metric = variant.name();
        out.push(summary_row(RunRecord::new(EVAL, cfg.seed, 0, k, m, est, metric, 0.0), &runs));
        let (_, se) = mean_se(&runs);
        out.push(RunRecord::new(EVAL, cfg.seed, 0, k, m, est, &format!("{metric}_se"), se));
    }
    Ok(out)
}
