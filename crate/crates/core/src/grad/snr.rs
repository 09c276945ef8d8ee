use crate::rng::RngStream;
use rayon::prelude::*;

/// Per-parameter `|mean| / std` over replicate gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct SnrReport {
    /// `None` where the replicate standard deviation is zero.
    pub per_param: Vec<Option<f64>>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Mean over defined entries (NaN when none are).
    pub mean: f64,
    /// Approximate standard error of `mean` from the sampling variance of
    /// each ratio, `(1 + snr²/2) / R`, assuming independent coordinates.
    pub mean_se: f64,
    pub p5: f64,
    pub p95: f64,
    pub replicates: usize,
}

/// Empirical quantile with linear interpolation on sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs `grad_fn` for replicates `0..replicates`, replicate `r` on the
/// stream `RngStream::derive(seed, r)`, in parallel; results are reduced in
/// replicate order so the report does not depend on scheduling.
pub fn measure_snr<F, E>(grad_fn: F, replicates: usize, seed: u64) -> Result<SnrReport, E>
where
    F: Fn(usize, &mut RngStream) -> Result<Vec<f64>, E> + Sync,
    E: Send,
{
    assert!(replicates >= 2, "SNR needs at least two replicates");
    let grads: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| grad_fn(r, &mut RngStream::derive(seed, r as u64)))
        .collect::<Result<_, E>>()?;
    Ok(summarize(&grads))
}

pub(crate) fn summarize(grads: &[Vec<f64>]) -> SnrReport {
    let n = grads.len() as f64;
    let p = grads[0].len();
    let mut means = vec![0.0; p];
    for g in grads {
        for (m, v) in means.iter_mut().zip(g) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; p];
    for g in grads {
        for ((s, v), m) in vars.iter_mut().zip(g).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stds: Vec<f64> = vars.iter().map(|s| (s / (n - 1.0)).sqrt()).collect();
    let per_param: Vec<Option<f64>> = means
        .iter()
        .zip(&stds)
        .map(|(m, s)| (*s > 0.0).then(|| m.abs() / s))
        .collect();
    let mut defined: Vec<f64> = per_param.iter().flatten().copied().collect();
    defined.sort_by(f64::total_cmp);
    let count = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / count;
    let var_sum: f64 = defined.iter().map(|s| (1.0 + 0.5 * s * s) / n).sum();
    SnrReport {
        mean,
        mean_se: var_sum.sqrt() / count,
        p5: quantile(&defined, 0.05),
        p95: quantile(&defined, 0.95),
        per_param,
        means,
        stds,
        replicates: grads.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_gradient_is_missing() {
        let r = measure_snr(|_, _| Ok::<_, ()>(vec![1.0, -2.0]), 5, 0).unwrap();
        assert_eq!(r.per_param, vec![None, None]);
        assert!(r.mean.is_nan());
    }

    #[test]
    fn unit_snr_for_n11() {
        let r = measure_snr(|_, rng| Ok::<_, ()>(vec![1.0 + rng.normal()]), 200_000, 3).unwrap();
        let s = r.per_param[0].unwrap();
        assert!((s - 1.0).abs() < 0.01, "{s}");
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert!((quantile(&v, 0.05) - 0.2).abs() < 1e-15);
    }
}
