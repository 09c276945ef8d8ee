use std::fmt::Write as _;
use std::io::{self, Write};

pub const CSV_HEADER: &str = "experiment,seed,step,K,M,estimator,metric,value,ci_low,ci_high,wall_ms";

/// One CSV row. `step` is the optimizer step or epoch, whichever the
/// experiment counts.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub seed: u64,
    pub step: usize,
    pub k: usize,
    pub m: usize,
    pub estimator: String,
    pub metric: String,
    pub value: f64,
    pub ci: Option<(f64, f64)>,
    pub wall_ms: u64,
}

impl RunRecord {
    pub fn new(experiment: &str, seed: u64, step: usize, k: usize, m: usize, estimator: &str, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            step,
            k,
            m,
            estimator: estimator.to_string(),
            metric: metric.to_string(),
            value,
            ci: None,
            wall_ms: 0,
        }
    }

    pub fn with_ci(mut self, low: f64, high: f64) -> Self {
        self.ci = Some((low, high));
        self
    }

    /// The row without a trailing newline; with `timing = false` the
    /// `wall_ms` field is left empty so reruns compare byte-for-byte.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.experiment, self.seed, self.step, self.k, self.m, self.estimator, self.metric, self.value
        );
        match self.ci {
            Some((lo, hi)) => {
                let _ = write!(s, ",{lo},{hi}");
            }
            None => s.push_str(",,"),
        }
        s.push(',');
        if timing {
            let _ = write!(s, "{}", self.wall_ms);
        }
        s
    }

    /// Parses a row written by [`RunRecord::to_csv`].
    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return None;
        }
        let ci = match (f[8], f[9]) {
            ("", "") => None,
            (lo, hi) => Some((lo.parse().ok()?, hi.parse().ok()?)),
        };
        Some(Self {
            experiment: f[0].to_string(),
            seed: f[1].parse().ok()?,
            step: f[2].parse().ok()?,
            k: f[3].parse().ok()?,
            m: f[4].parse().ok()?,
            estimator: f[5].to_string(),
            metric: f[6].to_string(),
            value: f[7].parse().ok()?,
            ci,
            wall_ms: if f[10].is_empty() { 0 } else { f[10].parse().ok()? },
        })
    }
}

pub fn write_csv(out: &mut impl Write, records: &[RunRecord], timing: bool) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_csv(timing))?;
    }
    Ok(())
}

pub fn csv_string(records: &[RunRecord], timing: bool) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records, timing).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Empirical 5th and 95th percentiles with linear interpolation.
pub fn ci90(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (crate::grad::quantile(&v, 0.05), crate::grad::quantile(&v, 0.95))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = mean(values);
    if values.len() < 2 {
        return (mu, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// A row with the replicate mean and its 90% interval. The interval is
/// widened to contain the mean if the sample is tiny and skewed.
pub fn summary_row(base: RunRecord, values: &[f64]) -> RunRecord {
    let mu = mean(values);
    let (lo, hi) = ci90(values);
    RunRecord { value: mu, ..base }.with_ci(lo.min(mu), hi.max(mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let r = RunRecord::new("snr", 3, 10, 8, 1, "dreg", "snr_mean", 0.125).with_ci(0.1, 0.2);
        let line = r.to_csv(true);
        assert_eq!(line, "snr,3,10,8,1,dreg,snr_mean,0.125,0.1,0.2,0");
        assert_eq!(RunRecord::from_csv(&line).unwrap(), r);
        let bare = RunRecord::new("snr", 3, 10, 8, 1, "dreg", "x", -1.5);
        assert_eq!(bare.to_csv(false), "snr,3,10,8,1,dreg,x,-1.5,,,");
        assert_eq!(RunRecord::from_csv(&bare.to_csv(false)).unwrap(), bare);
    }

    #[test]
    fn percentile_interval() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(ci90(&v), (5.0, 95.0));
        let s = summary_row(RunRecord::new("t", 0, 0, 0, 1, "e", "m", 0.0), &v);
        let (lo, hi) = s.ci.unwrap();
        assert!(lo <= s.value && s.value <= hi);
    }
}
