use super::ExperimentError;
use crate::grad::Estimator;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    ToyLaplace,
    Snr,
    VaeTrain,
    VaeEval,
    BoundsCheck,
    JackknifeStudy,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Self::ToyLaplace,
        Self::Snr,
        Self::VaeTrain,
        Self::VaeEval,
        Self::BoundsCheck,
        Self::JackknifeStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ToyLaplace => "toy-laplace",
            Self::Snr => "snr",
            Self::VaeTrain => "vae-train",
            Self::VaeEval => "vae-eval",
            Self::BoundsCheck => "bounds-check",
            Self::JackknifeStudy => "jackknife-study",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|e| e.name() == norm)
            .ok_or_else(|| ExperimentError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binarization {
    Dynamic,
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps, for the experiments that count steps, not epochs.
    pub steps: usize,
    /// `(factor, period)`: the rate is multiplied by `factor^(epoch/period)`.
    pub lr_anneal: Option<(f64, f64)>,
    pub amsgrad: bool,
}

impl OptimizerConfig {
    pub fn rate_at(&self, epoch: usize) -> f64 {
        match self.lr_anneal {
            Some((factor, period)) => self.learning_rate * factor.powf(epoch as f64 / period),
            None => self.learning_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Warmup {
    pub inner_kl: usize,
    pub outer_kl: usize,
}

/// Linear warm-up weight `min(1, epoch / span)`; a zero span is always 1.
pub fn warmup_weight(epoch: usize, span: usize) -> f64 {
    if span == 0 {
        1.0
    } else {
        (epoch as f64 / span as f64).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Directory holding the IDX files.
    pub path: PathBuf,
    pub subset_size: usize,
    pub binarization: Binarization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Overrides every K sweep or schedule with this single value.
    pub k: Option<usize>,
    /// Overrides the evaluation M grid with this single value.
    pub m: Option<usize>,
    pub l: usize,
    pub j: usize,
    pub replicates: usize,
    pub optimizer: OptimizerConfig,
    /// `(epoch_start, K)`, epochs strictly increasing from 0.
    pub k_schedule: Vec<(usize, usize)>,
    pub warmup: Warmup,
    pub estimator: Estimator,
    pub data: DataConfig,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Values of K swept by toy-laplace, snr and the study experiments.
    pub k_sweep: Vec<usize>,
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub z_dim: usize,
    pub psi_dim: usize,
    pub eval_interval: usize,
    pub eval_samples: usize,
    /// K used while training `τ` in the snr experiment.
    pub train_k: usize,
    pub eval_m: Vec<usize>,
    pub eval_k: Vec<usize>,
    pub eval_variants: Vec<String>,
    pub eval_images: usize,
    pub refit_steps: usize,
    pub instances: usize,
    /// Initial gate logit of gated auxiliary networks.
    pub gate_init: f64,
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ExperimentError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(key, v)))
        .collect()
}

fn bad(key: &str, v: &str) -> ExperimentError {
    ExperimentError::Config(format!("invalid value `{v}` for `{key}`"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ExperimentError> {
    v.trim().parse().map_err(|_| bad(key, v))
}

fn pair_list(key: &str, v: &str) -> Result<Vec<(usize, usize)>, ExperimentError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (a, b) = item.split_once(':').ok_or_else(|| bad(key, v))?;
            Ok((num(key, a)?, num(key, b)?))
        })
        .collect()
}

fn flag(key: &str, v: &str) -> Result<bool, ExperimentError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v)),
    }
}

fn optional_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            seed: 0,
            k: None,
            m: None,
            l: 1,
            j: 1,
            replicates: 10,
            optimizer: OptimizerConfig {
                learning_rate: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                batch_size: 100,
                epochs: 50,
                steps: 2000,
                lr_anneal: None,
                amsgrad: false,
            },
            k_schedule: vec![(0, 0)],
            warmup: Warmup { inner_kl: 0, outer_kl: 0 },
            estimator: Estimator::Autodiff,
            data: DataConfig {
                path: PathBuf::from("data"),
                subset_size: 2000,
                binarization: Binarization::Dynamic,
            },
            output: None,
            checkpoint: None,
            k_sweep: vec![10],
            dim: 50,
            hidden: vec![128, 128, 128],
            z_dim: 8,
            psi_dim: 8,
            eval_interval: 250,
            eval_samples: 1000,
            train_k: 1,
            eval_m: vec![100],
            eval_k: vec![0, 4, 16],
            eval_variants: vec!["diwhvi".into(), "sivi_like".into(), "sivi_equicomp".into()],
            eval_images: 100,
            refit_steps: 0,
            instances: 50,
            gate_init: crate::models::GATE_INIT,
        };
        match experiment {
            Experiment::ToyLaplace => {
                c.optimizer.batch_size = 32;
            }
            Experiment::Snr => {
                c.optimizer.learning_rate = 1e-2;
                c.optimizer.steps = 1000;
                c.optimizer.amsgrad = true;
                c.replicates = 1000;
                c.k_sweep = vec![1, 8, 64];
                c.dim = crate::models::SNR_DIM;
            }
            Experiment::VaeTrain | Experiment::VaeEval => {
                c.k_schedule = vec![(0, 0), (10, 2), (25, 5)];
                c.hidden = vec![64, 64];
                c.dim = 784;
                c.replicates = 10;
            }
            Experiment::BoundsCheck => {
                c.k_sweep = vec![0, 1, 2, 3, 4];
            }
            Experiment::JackknifeStudy => {
                c.k_sweep = vec![1, 2, 3, 4, 5];
                c.instances = 20;
                c.j = 1;
            }
        }
        c
    }

    /// Parses a flat `key = value` file (`#` starts a comment), then applies
    /// `overrides` in order, so later values win. The `experiment` key is
    /// taken from `overrides` first, then from the file.
    pub fn from_sources(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self, ExperimentError> {
        let mut pairs = Vec::new();
        if let Some(text) = file {
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| ExperimentError::Config(format!("line {}: expected `key = value`", n + 1)))?;
                pairs.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        pairs.extend(overrides.iter().cloned());
        let experiment = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "experiment")
            .map(|(_, v)| v.parse::<Experiment>())
            .transpose()?
            .ok_or_else(|| ExperimentError::Config("no experiment given".into()))?;
        let mut cfg = Self::defaults(experiment);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ExperimentError> {
        let o = &mut self.optimizer;
        match key.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "experiment" => self.experiment = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            "k" => self.k = Some(num(key, v)?),
            "m" => self.m = Some(num(key, v)?),
            "l" => self.l = num(key, v)?,
            "j" => self.j = num(key, v)?,
            "replicates" => self.replicates = num(key, v)?,
            "learning_rate" | "lr" => o.learning_rate = num(key, v)?,
            "beta1" => o.beta1 = num(key, v)?,
            "beta2" => o.beta2 = num(key, v)?,
            "batch_size" => o.batch_size = num(key, v)?,
            "epochs" => o.epochs = num(key, v)?,
            "steps" => o.steps = num(key, v)?,
            "amsgrad" => o.amsgrad = flag(key, v)?,
            "lr_anneal" => {
                o.lr_anneal = match v.trim() {
                    "" | "none" => None,
                    s => {
                        let (f, p) = s.split_once(':').ok_or_else(|| bad(key, v))?;
                        Some((num(key, f)?, num(key, p)?))
                    }
                }
            }
            "k_schedule" => self.k_schedule = pair_list(key, v)?,
            "warmup_inner_kl" => self.warmup.inner_kl = num(key, v)?,
            "warmup_outer_kl" => self.warmup.outer_kl = num(key, v)?,
            "estimator" => {
                self.estimator = v
                    .trim()
                    .parse()
                    .map_err(|_| ExperimentError::Config(format!("unknown estimator `{v}`")))?
            }
            "data_path" | "data" => self.data.path = PathBuf::from(v.trim()),
            "subset_size" => self.data.subset_size = num(key, v)?,
            "binarization" => {
                self.data.binarization = match v.trim().to_ascii_lowercase().as_str() {
                    "dynamic" => Binarization::Dynamic,
                    "fixed" => Binarization::Fixed,
                    _ => return Err(bad(key, v)),
                }
            }
            "output" | "out" => self.output = optional_path(v),
            "checkpoint" => self.checkpoint = optional_path(v),
            "k_sweep" => self.k_sweep = parse_list(key, v)?,
            "dim" => self.dim = num(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "z_dim" => self.z_dim = num(key, v)?,
            "psi_dim" => self.psi_dim = num(key, v)?,
            "eval_interval" => self.eval_interval = num(key, v)?,
            "eval_samples" => self.eval_samples = num(key, v)?,
            "train_k" => self.train_k = num(key, v)?,
            "eval_m" => self.eval_m = parse_list(key, v)?,
            "eval_k" => self.eval_k = parse_list(key, v)?,
            "eval_variants" => self.eval_variants = parse_list(key, v)?,
            "eval_images" => self.eval_images = num(key, v)?,
            "refit_steps" => self.refit_steps = num(key, v)?,
            "instances" => self.instances = num(key, v)?,
            "gate_init" => self.gate_init = num(key, v)?,
            other => return Err(ExperimentError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// K values to sweep, honouring a single-K override.
    pub fn ks(&self) -> Vec<usize> {
        match self.k {
            Some(k) => vec![k],
            None => self.k_sweep.clone(),
        }
    }

    /// Evaluation grid in M, honouring a single-M override.
    pub fn eval_ms(&self) -> Vec<usize> {
        match self.m {
            Some(m) => vec![m],
            None => self.eval_m.clone(),
        }
    }

    /// Evaluation grid in K, honouring a single-K override.
    pub fn eval_ks(&self) -> Vec<usize> {
        match self.k {
            Some(k) => vec![k],
            None => self.eval_k.clone(),
        }
    }

    /// The training schedule, honouring a single-K override.
    pub fn schedule(&self) -> Vec<(usize, usize)> {
        match self.k {
            Some(k) => vec![(0, k)],
            None => self.k_schedule.clone(),
        }
    }

    /// K in force at `epoch`.
    pub fn k_at(&self, epoch: usize) -> usize {
        self.schedule()
            .iter()
            .take_while(|(start, _)| *start <= epoch)
            .last()
            .map_or(0, |&(_, k)| k)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: &str| Err(ExperimentError::Config(m.to_string()));
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return err("beta1 and beta2 must lie in [0, 1)");
        }
        if o.batch_size == 0 {
            return err("batch_size must be positive");
        }
        if let Some((f, p)) = o.lr_anneal {
            if !(f > 0.0 && p > 0.0) {
                return err("lr_anneal needs a positive factor and period");
            }
        }
        if self.replicates == 0 || self.m == Some(0) || self.l == 0 {
            return err("replicates, m and l must be positive");
        }
        let sched = &self.k_schedule;
        if sched.is_empty() || sched[0].0 != 0 {
            return err("k_schedule must start at epoch 0");
        }
        if sched.windows(2).any(|w| w[0].0 >= w[1].0) {
            return err("k_schedule epochs must be strictly increasing");
        }
        if self.ks().is_empty() {
            return err("k_sweep is empty");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.dim == 0 || self.z_dim == 0 || self.psi_dim == 0 {
            return err("network sizes must be positive");
        }
        if self.eval_samples == 0 || self.eval_interval == 0 {
            return err("eval_samples and eval_interval must be positive");
        }
        if matches!(self.experiment, Experiment::VaeEval) {
            if self.eval_m.is_empty() || self.eval_m.contains(&0) || self.eval_k.is_empty() {
                return err("eval_m and eval_k must be non-empty, with M ≥ 1");
            }
            for v in &self.eval_variants {
                v.parse::<crate::bounds::Variant>()
                    .map_err(|_| ExperimentError::Config(format!("unknown variant `{v}`")))?;
            }
        }
        if matches!(self.experiment, Experiment::VaeTrain | Experiment::VaeEval) && self.data.subset_size < 10 {
            return err("subset_size must be at least 10");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn file_then_flags() {
        let text = "experiment = vae-train\n# comment\nseed = 3\nk_schedule = 0:0, 5:2\nwarmup_inner_kl = 4\n";
        let c = ExperimentConfig::from_sources(Some(text), &[kv("seed", "9")]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.k_schedule, vec![(0, 0), (5, 2)]);
        assert_eq!((c.k_at(4), c.k_at(5), c.k_at(99)), (0, 2, 2));
        assert_eq!(c.warmup.inner_kl, 4);
        let c = ExperimentConfig::from_sources(Some(text), &[kv("k", "7")]).unwrap();
        assert_eq!(c.k_at(0), 7);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = |t: &str| ExperimentConfig::from_sources(Some(t), &[]).is_err();
        assert!(bad("experiment = nope"));
        assert!(bad("experiment = snr\nfoo = 1"));
        assert!(bad("experiment = snr\nlearning_rate = -1"));
        assert!(bad("experiment = vae-train\nk_schedule = 0:0,5:1,5:2"));
        assert!(bad("experiment = vae-train\nk_schedule = 1:0"));
        assert!(bad("seed = 1"));
        assert!(bad("experiment = snr\nthis line has no equals"));
    }

    #[test]
    fn warmup_is_clamped_linear() {
        assert_eq!(warmup_weight(0, 10), 0.0);
        assert_eq!(warmup_weight(5, 10), 0.5);
        assert_eq!(warmup_weight(25, 10), 1.0);
        assert_eq!(warmup_weight(0, 0), 1.0);
    }

    #[test]
    fn anneal_rate() {
        let mut o = ExperimentConfig::defaults(Experiment::VaeTrain).optimizer;
        o.lr_anneal = Some((0.95, 100.0));
        assert!((o.rate_at(100) - 0.95e-3).abs() < 1e-15);
        assert_eq!(o.rate_at(0), 1e-3);
    }
}
