//! Synthetic 1-manifold data in R^3 and the simulation studies built on it.
//!
//! The latent coordinate `t ~ N(0, 1)` is embedded as
//!
//! ```text
//! X1 = t,   X2 = t^3 + sin(t) - 1,   X3 = ln(t^2 + 1) - t
//! ```
//!
//! optionally with independent `N(0, sigma'^2)` noise on every coordinate,
//! and `Y = m(X) + eps` with `m(x) = cos(x1) + x2 - x3^2`.
//!
//! # Random streams
//!
//! All draws come from ChaCha20 seeded with `seed_from_u64(seed)`. Each
//! channel uses its own ChaCha stream number, so channels never share
//! state: stream 0 is the latent `t`, streams 1..=3 are the coordinate
//! noises (drawn only when `sigma' > 0`), stream 4 is the response noise.
//! Within a stream the draws are taken in row order, one standard normal
//! (ziggurat, `rand_distr::StandardNormal`) per row.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{candidate_bandwidths, default_lambdas, select_bandwidth_with};
use crate::dimest::{estimate_dimension, DEFAULT_K};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::locpoly::{standardize, Dataset, LocalSmoother, PolyBasis};
use crate::neighbors::PointSet;

const STREAM_LATENT: u64 = 0;
const STREAM_COORD_NOISE: [u64; 3] = [1, 2, 3];
const STREAM_RESPONSE: u64 = 4;

/// `m(x) = cos(x1) + x2 - x3^2`.
pub fn true_regression(x: &[f64]) -> Result<f64> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: x.len(),
        });
    }
    Ok(x[0].cos() + x[1] - x[2] * x[2])
}

/// Noise-free embedding of the latent coordinate.
pub fn manifold_point(t: f64) -> [f64; 3] {
    [t, t.powi(3) + t.sin() - 1.0, (t * t + 1.0).ln() - t]
}

/// Regression function used to build responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ResponseModel {
    /// `cos(x1) + x2 - x3^2`
    #[default]
    Reference,
    Constant {
        value: f64,
    },
    Linear {
        intercept: f64,
        slopes: [f64; 3],
    },
}

impl ResponseModel {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            ResponseModel::Reference => true_regression(x),
            ResponseModel::Constant { value } => Ok(*value),
            ResponseModel::Linear { intercept, slopes } => {
                if x.len() != 3 {
                    return Err(Error::DimensionMismatch {
                        expected: 3,
                        found: x.len(),
                    });
                }
                Ok(intercept + slopes.iter().zip(x).map(|(s, v)| s * v).sum::<f64>())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub seed: u64,
    pub sigma_prime: f64,
    #[serde(default)]
    pub response: ResponseModel,
    /// Standard deviation of the response noise (1 in the reference setup).
    #[serde(default = "one")]
    pub noise_sd: f64,
}

fn one() -> f64 {
    1.0
}

impl GenConfig {
    pub fn new(n: usize, seed: u64, sigma_prime: f64) -> Self {
        Self {
            n,
            seed,
            sigma_prime,
            response: ResponseModel::Reference,
            noise_sd: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidConfig(format!("n = {} is below 10", self.n)));
        }
        if !(self.sigma_prime >= 0.0) || !self.sigma_prime.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma_prime = {} must be a finite non-negative number",
                self.sigma_prime
            )));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise_sd = {} must be a finite non-negative number",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::new(200, 0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub dataset: Dataset,
    /// Latent coordinate `t` per row.
    pub latent: Vec<f64>,
    /// `m(X_i)` at the observed predictors.
    pub truth: Vec<f64>,
}

fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn generate(config: &GenConfig) -> Result<GeneratedData> {
    config.validate()?;
    let n = config.n;
    let latent = normals(config.seed, STREAM_LATENT, n);
    let mut coords: Vec<f64> = latent.iter().flat_map(|&t| manifold_point(t)).collect();
    if config.sigma_prime > 0.0 {
        for (axis, &stream) in STREAM_COORD_NOISE.iter().enumerate() {
            for (i, e) in normals(config.seed, stream, n).into_iter().enumerate() {
                coords[3 * i + axis] += config.sigma_prime * e;
            }
        }
    }
    let x = PointSet::from_flat(coords, 3)?;
    let truth = x
        .rows()
        .map(|r| config.response.eval(r))
        .collect::<Result<Vec<_>>>()?;
    let y = if config.noise_sd > 0.0 {
        truth
            .iter()
            .zip(normals(config.seed, STREAM_RESPONSE, n))
            .map(|(m, e)| m + config.noise_sd * e)
            .collect()
    } else {
        truth.clone()
    };
    Ok(GeneratedData {
        dataset: Dataset::new(x, y)?,
        latent,
        truth,
    })
}

/// The `n1` rows in the middle of the sample when ranked by the first
/// predictor (ties by row id), returned in rank order.
pub fn middle_block(data: &Dataset, n1: usize) -> Result<Vec<usize>> {
    let n = data.len();
    if n1 > n {
        return Err(Error::BlockTooLarge { block: n1, n });
    }
    if n1 == 0 {
        return Err(Error::InvalidBlock("block size is zero".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        data.x().row(a)[0]
            .total_cmp(&data.x().row(b)[0])
            .then(a.cmp(&b))
    });
    let offset = (n - n1) / 2;
    Ok(order[offset..offset + n1].to_vec())
}

/// Settings shared by the experiment, the noise sweep, and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub block_size: usize,
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub kernel: KernelFamily,
    pub degree: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            block_size: 100,
            k: DEFAULT_K,
            lambdas: default_lambdas(),
            kernel: KernelFamily::Epanechnikov,
            degree: 1,
        }
    }
}

/// Fitted values at one block row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub row: usize,
    pub x1_std: f64,
    pub truth: f64,
    pub ull: f64,
    pub mll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub d_hat: f64,
    pub h_ull: f64,
    pub h_mll: f64,
    pub mse_ull: f64,
    pub mse_mll: f64,
    pub block: Vec<usize>,
    pub curve: Vec<CurvePoint>,
}

struct MethodFit {
    h: f64,
    fitted: Vec<f64>,
}

fn select_and_fit(
    data: &Dataset,
    block: &[usize],
    intrinsic_dim: f64,
    opts: &ExperimentOptions,
) -> Result<MethodFit> {
    let smoother = LocalSmoother::new(data)?;
    let basis = PolyBasis::new(data.dim(), opts.degree)?;
    let grid = candidate_bandwidths(&opts.lambdas, data.len(), intrinsic_dim)?;
    let sel = select_bandwidth_with(&smoother, block, &grid, &basis, opts.kernel)?;
    let kernel = KernelSpec::new(opts.kernel, sel.chosen, data.dim())?;
    let fits = smoother.fit_block(block, &kernel, &basis)?;
    Ok(MethodFit {
        h: sel.chosen,
        fitted: fits.into_iter().map(|f| f.fitted).collect(),
    })
}

fn block_mse(fitted: &[f64], truth: &[f64], block: &[usize]) -> f64 {
    fitted
        .iter()
        .zip(block)
        .map(|(f, &j)| (f - truth[j]).powi(2))
        .sum::<f64>()
        / block.len() as f64
}

/// Oracle (first predictor only, `d = 1`) versus blind (all predictors,
/// estimated `d`) local fits with mGCV-selected bandwidths on the middle block.
pub fn analyze(
    generated: &GeneratedData,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentResult> {
    let (std_data, _) = standardize(&generated.dataset)?;
    let block = middle_block(&std_data, opts.block_size)?;

    let smoother = LocalSmoother::new(&std_data)?;
    let dim = estimate_dimension(std_data.x(), &block, opts.k, smoother.index())?;

    let ull_data = std_data.select_columns(&[0])?;
    let ull = select_and_fit(&ull_data, &block, 1.0, opts)?;
    let mll = select_and_fit(&std_data, &block, dim.d_hat, opts)?;

    let curve = block
        .iter()
        .enumerate()
        .map(|(b, &j)| CurvePoint {
            row: j,
            x1_std: std_data.x().row(j)[0],
            truth: generated.truth[j],
            ull: ull.fitted[b],
            mll: mll.fitted[b],
        })
        .collect();
    Ok(ExperimentResult {
        seed,
        d_hat: dim.d_hat,
        h_ull: ull.h,
        h_mll: mll.h,
        mse_ull: block_mse(&ull.fitted, &generated.truth, &block),
        mse_mll: block_mse(&mll.fitted, &generated.truth, &block),
        block,
        curve,
    })
}

pub fn run_experiment(config: &GenConfig, opts: &ExperimentOptions) -> Result<ExperimentResult> {
    analyze(&generate(config)?, config.seed, opts)
}

/// `0.02, 0.04, ..., 0.20`.
pub fn default_sigma_primes() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.02).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma_prime: f64,
    pub mean_mse: f64,
    pub sd_mse: f64,
    pub mse: Vec<f64>,
}

/// Blind-fit MSE averaged over seeds for each coordinate-noise level,
/// in ascending `sigma'` order.
pub fn noise_sweep(
    sigma_primes: &[f64],
    seeds: &[u64],
    n: usize,
    opts: &ExperimentOptions,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "noise sweep needs at least one seed".into(),
        ));
    }
    let mut levels = sigma_primes.to_vec();
    levels.sort_by(f64::total_cmp);
    levels
        .iter()
        .map(|&sp| {
            let mse = seeds
                .par_iter()
                .map(|&seed| run_experiment(&GenConfig::new(n, seed, sp), opts).map(|r| r.mse_mll))
                .collect::<Result<Vec<_>>>()?;
            let (mean, sd) = mean_sd(&mse);
            Ok(SweepRow {
                sigma_prime: sp,
                mean_mse: mean,
                sd_mse: sd,
                mse,
            })
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

// Replication seeds are spread with SplitMix64 so neighbouring base seeds
// do not produce overlapping replication seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under base seed `seed`.
pub fn replication_seed(seed: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ rep)
}

/// Settings for a fixed-point Monte Carlo study on raw (unstandardized)
/// predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStudy {
    /// Evaluation point in the ambient coordinates.
    pub eval_point: Vec<f64>,
    /// Predictor columns handed to the smoother (all three for the blind fit).
    pub columns: Vec<usize>,
    pub degree: usize,
    pub kernel: KernelFamily,
    pub sigma_prime: f64,
    pub response: ResponseModel,
    pub noise_sd: f64,
}

impl PointStudy {
    /// Blind local-linear fit at the manifold point with latent coordinate `t`.
    pub fn blind_at(t: f64) -> Self {
        Self {
            eval_point: manifold_point(t).to_vec(),
            columns: vec![0, 1, 2],
            degree: 1,
            kernel: KernelFamily::Epanechnikov,
            sigma_prime: 0.0,
            response: ResponseModel::Reference,
            noise_sd: 1.0,
        }
    }

    fn target(&self) -> Result<f64> {
        self.response.eval(&self.eval_point)
    }

    /// Estimate at the evaluation point for one freshly generated sample.
    pub fn estimate(&self, n: usize, seed: u64, h: f64) -> Result<f64> {
        let gen = generate(&GenConfig {
            n,
            seed,
            sigma_prime: self.sigma_prime,
            response: self.response.clone(),
            noise_sd: self.noise_sd,
        })?;
        let data = gen.dataset.select_columns(&self.columns)?;
        let x: Vec<f64> = self.columns.iter().map(|&c| self.eval_point[c]).collect();
        let kernel = KernelSpec::new(self.kernel, h, data.dim())?;
        let basis = PolyBasis::new(data.dim(), self.degree)?;
        Ok(crate::locpoly::local_fit(&data, &x, &kernel, &basis, None)?.fitted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub h: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Log-log slope of MSE against n; `None` when the MSEs sit at
    /// machine-zero scale and the slope is meaningless.
    pub slope: Option<f64>,
    pub flag: Option<String>,
}

/// MSEs at or below this are treated as exact reproduction.
pub const MACHINE_ZERO_MSE: f64 = 1e-20;

/// Pointwise MSE at `h = lambda0 * n^(-1/(2(q+1) + d))` for each `n`,
/// with the log-log slope across `ns`.
pub fn rate_study(
    study: &PointStudy,
    ns: &[usize],
    seeds: &[u64],
    lambda0: f64,
    intrinsic_dim: f64,
) -> Result<RateStudy> {
    if ns.len() < 4 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "rate study needs at least four strictly ascending sample sizes".into(),
        ));
    }
    if seeds.is_empty() || !(lambda0 > 0.0) {
        return Err(Error::InvalidConfig(
            "rate study needs seeds and a positive lambda0".into(),
        ));
    }
    let target = study.target()?;
    let exponent = -1.0 / (2.0 * (study.degree as f64 + 1.0) + intrinsic_dim);
    let rows = ns
        .iter()
        .map(|&n| {
            let h = lambda0 * (n as f64).powf(exponent);
            let sq = seeds
                .par_iter()
                .map(|&s| {
                    study
                        .estimate(n, replication_seed(s, n as u64), h)
                        .map(|m| (m - target).powi(2))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RateRow {
                n,
                h,
                mse: sq.iter().sum::<f64>() / sq.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let degenerate = rows
        .iter()
        .any(|r| !(r.mse > MACHINE_ZERO_MSE) || !r.mse.is_finite());
    let (slope, flag) = if degenerate {
        (
            None,
            Some("MSE at machine-zero scale; slope undefined".to_string()),
        )
    } else {
        let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.mse.ln()).collect();
        (Some(ols_slope(&lx, &ly)), None)
    };
    Ok(RateStudy { rows, slope, flag })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance {
    pub h: f64,
    pub n: usize,
    pub reps: usize,
    pub bias: f64,
    pub variance: f64,
}

/// Monte Carlo bias and variance of the estimate at a fixed point.
pub fn bias_variance_probe(
    study: &PointStudy,
    h: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<BiasVariance> {
    if reps < 2 {
        return Err(Error::InvalidConfig(
            "probe needs at least two replications".into(),
        ));
    }
    let target = study.target()?;
    let est = (0..reps as u64)
        .into_par_iter()
        .map(|r| study.estimate(n, replication_seed(seed, r), h))
        .collect::<Result<Vec<_>>>()?;
    let (mean, sd) = mean_sd(&est);
    Ok(BiasVariance {
        h,
        n,
        reps,
        bias: mean - target,
        variance: sd * sd,
    })
}
