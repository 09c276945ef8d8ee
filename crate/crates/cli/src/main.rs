use clap::Parser;
use hvi::experiments::{run, write_csv, Experiment, ExperimentConfig, ExperimentError};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run a seeded experiment and write its results as CSV.
#[derive(Parser, Debug)]
#[command(name = "hvi", version)]
struct Args {
    /// toy-laplace, snr, vae-train, vae-eval, bounds-check or jackknife-study
    experiment: Experiment,
    /// Flat `key = value` config file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// autodiff or dreg
    #[arg(long)]
    estimator: Option<String>,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Leave the wall_ms column empty so that reruns compare byte for byte.
    #[arg(long)]
    no_timing: bool,
}

fn overrides(args: &Args) -> Result<Vec<(String, String)>, ExperimentError> {
    let mut out = vec![("experiment".to_string(), args.experiment.to_string())];
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    flag("seed", args.seed.map(|v| v.to_string()));
    flag("k", args.k.map(|v| v.to_string()));
    flag("m", args.m.map(|v| v.to_string()));
    flag("output", args.out.as_ref().map(|p| p.display().to_string()));
    flag("checkpoint", args.checkpoint.as_ref().map(|p| p.display().to_string()));
    flag("estimator", args.estimator.clone());
    Ok(out)
}

fn execute(args: &Args) -> Result<(), ExperimentError> {
    let text = match &args.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| ExperimentError::Config(format!("reading {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let cfg = ExperimentConfig::from_sources(text.as_deref(), &overrides(args)?)?;
    let records = run(&cfg)?;
    let timing = !args.no_timing;
    match &cfg.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_csv(&mut w, &records, timing)?;
            w.flush()?;
        }
        None => write_csv(&mut io::stdout().lock(), &records, timing)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hvi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
