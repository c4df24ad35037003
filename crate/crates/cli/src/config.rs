use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use locreg::bandwidth::default_lambdas;
use locreg::synth::default_sigma_primes;
use locreg::KernelFamily;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "locreg",
    version,
    about = "Manifold-adaptive local polynomial regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Generate,
    EstimateDim,
    SelectBandwidth,
    Fit,
    Experiment,
    NoiseSweep,
    RateStudy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and its noiseless regression values
    Generate(Flags),
    /// Estimate the intrinsic dimension over a block
    EstimateDim(Flags),
    /// Score candidate bandwidths by blockwise GCV
    SelectBandwidth(Flags),
    /// Local polynomial predictions at data or evaluation points
    Fit(Flags),
    /// Oracle univariate versus blind multivariate fit on the middle block
    Experiment(Flags),
    /// Blind-fit MSE across coordinate-noise levels
    NoiseSweep(Flags),
    /// Pointwise MSE against sample size with log-log slope
    RateStudy(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Generate(f) => (CommandKind::Generate, f),
            Command::EstimateDim(f) => (CommandKind::EstimateDim, f),
            Command::SelectBandwidth(f) => (CommandKind::SelectBandwidth, f),
            Command::Fit(f) => (CommandKind::Fit, f),
            Command::Experiment(f) => (CommandKind::Experiment, f),
            Command::NoiseSweep(f) => (CommandKind::NoiseSweep, f),
            Command::RateStudy(f) => (CommandKind::RateStudy, f),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Load the full run configuration from a JSON document; other flags are ignored
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_prime: f64,
    #[arg(long, default_value_t = locreg::dimest::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: KernelFamily,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Comma-separated ascending list, or "default" (20 geometric points in [0.3, 6])
    #[arg(long, default_value = "default")]
    pub lambdas: String,
    #[arg(long, default_value_t = 100)]
    pub block_size: usize,
    /// Explicit comma-separated block row ids (overrides --block-size)
    #[arg(long, alias = "block")]
    pub block_ids: Option<String>,
    /// Input CSV with columns x1..xD and y
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Evaluation points CSV with columns x1..xD (fit only)
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Monte Carlo replications (seeds per level for noise-sweep and rate-study)
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated sample sizes for rate-study
    #[arg(long, default_value = "500,1000,2000,4000,8000")]
    pub ns: String,
    /// Noise levels as start:stop:step or a comma list
    #[arg(long, default_value = "0.02:0.20:0.02")]
    pub sweep: String,
    /// Fixed bandwidth (skips selection in fit)
    #[arg(long)]
    pub h: Option<f64>,
    /// Intrinsic dimension for the bandwidth grid (skips estimation)
    #[arg(long)]
    pub dim: Option<f64>,
    /// Bandwidth constant for rate-study, h = lambda0 * n^(-1/(2q+3))
    #[arg(long, default_value_t = 1.0)]
    pub lambda0: f64,
    /// Latent coordinate of the rate-study evaluation point on the curve
    #[arg(long, default_value_t = 0.5)]
    pub eval_t: f64,
    /// Skip predictor standardization (fit, estimate-dim, select-bandwidth)
    #[arg(long)]
    pub raw: bool,
}

/// Fully resolved settings of one invocation. Written into every summary so
/// that the run can be repeated from the JSON alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub n: usize,
    pub sigma_prime: f64,
    pub kernel: KernelFamily,
    pub degree: usize,
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub block_size: usize,
    pub block_ids: Option<Vec<usize>>,
    pub sweep: Vec<f64>,
    pub reps: usize,
    pub ns: Vec<usize>,
    pub h: Option<f64>,
    pub dim: Option<f64>,
    pub lambda0: f64,
    pub eval_t: f64,
    pub standardize: bool,
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| CliError::Config(format!("cannot parse '{t}' in --{what}")))
        })
        .collect()
}

pub fn parse_lambdas(s: &str) -> Result<Vec<f64>, CliError> {
    if s.trim().eq_ignore_ascii_case("default") {
        Ok(default_lambdas())
    } else {
        parse_list("lambdas", s)
    }
}

pub fn parse_sweep(s: &str) -> Result<Vec<f64>, CliError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("default") {
        return Ok(default_sigma_primes());
    }
    if !s.contains(':') {
        return parse_list("sweep", s);
    }
    let parts: Vec<f64> = s
        .split(':')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("cannot parse '{t}' in --sweep")))
        })
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(CliError::Config(
            "--sweep range must be start:stop:step".into(),
        ));
    };
    if step.is_nan() || step <= 0.0 || stop < start {
        return Err(CliError::Config(
            "--sweep needs step > 0 and stop >= start".into(),
        ));
    }
    // index-based so 0.02:0.20:0.02 gives exactly ten levels
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

impl RunConfig {
    pub fn resolve(command: CommandKind, f: Flags) -> Result<Self, CliError> {
        if let Some(path) = &f.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            if cfg.command != command {
                return Err(CliError::Config(format!(
                    "config file is for '{}' but '{}' was requested",
                    cfg.command.name(),
                    command.name()
                )));
            }
            return Ok(cfg);
        }
        let reps = f.reps.unwrap_or(match command {
            CommandKind::RateStudy => 50,
            _ => 20,
        });
        let block_ids = f
            .block_ids
            .as_deref()
            .map(|s| parse_list::<usize>("block-ids", s))
            .transpose()?;
        Ok(Self {
            command,
            input: f.input,
            eval: f.eval,
            output_dir: f.output_dir,
            seed: f.seed,
            n: f.n,
            sigma_prime: f.sigma_prime,
            kernel: f.kernel,
            degree: f.degree,
            k: f.k,
            lambdas: parse_lambdas(&f.lambdas)?,
            block_size: f.block_size,
            block_ids,
            sweep: parse_sweep(&f.sweep)?,
            reps,
            ns: parse_list("ns", &f.ns)?,
            h: f.h,
            dim: f.dim,
            lambda0: f.lambda0,
            eval_t: f.eval_t,
            standardize: !f.raw,
        })
    }

    /// Seeds `seed, seed + 1, ..., seed + reps - 1`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.reps as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Generate => "generate",
            CommandKind::EstimateDim => "estimate-dim",
            CommandKind::SelectBandwidth => "select-bandwidth",
            CommandKind::Fit => "fit",
            CommandKind::Experiment => "experiment",
            CommandKind::NoiseSweep => "noise-sweep",
            CommandKind::RateStudy => "rate-study",
        }
    }
}
