//! Blockwise cross-validation bandwidth selection.
//!
//! Only the rows of a block `J` are scored, but every fit uses the whole
//! sample. With `S_jj` the self-weight of row `j` in its own fit,
//!
//! ```text
//! mCV(h)  = 1/n1 sum_J (Y_j - m_h(X_j))^2 / (1 - S_jj)^2
//! mGCV(h) = 1/n1 sum_J (Y_j - m_h(X_j))^2 / (1 - atr)^2,   atr = mean_J S_jj
//! ```
//!
//! Candidates are `h_b = lambda_b * n^(-1/(d + 4))` for an intrinsic
//! dimension `d` (estimated or known).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::locpoly::{Dataset, LocalFit, LocalSmoother, PolyBasis};

/// Self-weights at or above `1 - S_MAX_GAP` make the mCV denominator unusable.
pub const S_MAX_GAP: f64 = 1e-10;

/// 20 geometric points from 0.3 to 6.0.
pub fn default_lambdas() -> Vec<f64> {
    geometric_lambdas(0.3, 6.0, 20)
}

pub fn geometric_lambdas(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo * (ratio * i as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub d_hat: f64,
    pub candidates: Vec<f64>,
}

impl BandwidthGrid {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

pub fn candidate_bandwidths(lambdas: &[f64], n: usize, d_hat: f64) -> Result<BandwidthGrid> {
    if lambdas.is_empty() {
        return Err(Error::BadGrid("no lambda values".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::BadGrid(format!("lambda {l} is not positive")));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::BadGrid("lambdas must be strictly ascending".into()));
    }
    if n < 2 {
        return Err(Error::BadGrid(format!("sample size {n} is below 2")));
    }
    if !(d_hat > 0.0) || !d_hat.is_finite() {
        return Err(Error::BadGrid(format!("dimension {d_hat} is not positive")));
    }
    let rate = (n as f64).powf(-1.0 / (d_hat + 4.0));
    Ok(BandwidthGrid {
        lambdas: lambdas.to_vec(),
        n,
        d_hat,
        candidates: lambdas.iter().map(|l| l * rate).collect(),
    })
}

/// Criterion value at one candidate bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub h: f64,
    /// `None` when the candidate is infeasible.
    pub mgcv: Option<f64>,
    pub atr: Option<f64>,
    pub rss_block: Option<f64>,
    pub infeasible_reason: Option<String>,
}

impl CriterionScore {
    pub fn is_feasible(&self) -> bool {
        self.mgcv.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub scores: Vec<CriterionScore>,
    pub chosen: f64,
    pub chosen_index: usize,
}

fn infeasible(h: f64, reason: impl Into<String>) -> Error {
    Error::Infeasible {
        h,
        reason: reason.into(),
    }
}

// Self-inclusive block fits with their residuals; fails on any NoSupport or
// rank-deficient fit.
fn block_fits(
    smoother: &LocalSmoother<'_>,
    block: &[usize],
    h: f64,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<Vec<(LocalFit, f64)>> {
    let data = smoother.data();
    let kernel = KernelSpec::new(family, h, data.dim())?;
    let fits = smoother
        .fit_block(block, &kernel, basis)
        .map_err(|e| match e {
            Error::NoSupport { row } => infeasible(
                h,
                format!("no kernel support at row {}", row.map_or(-1, |r| r as i64)),
            ),
            other => other,
        })?;
    fits.into_iter()
        .zip(block)
        .map(|(fit, &j)| {
            if !fit.is_full_rank() {
                return Err(infeasible(
                    h,
                    format!(
                        "rank-deficient fit at row {j} (rank {} of {})",
                        fit.effective_rank,
                        fit.coefficients.len()
                    ),
                ));
            }
            let resid = data.y()[j] - fit.fitted;
            Ok((fit, resid))
        })
        .collect()
}

/// Leave-one-out block criterion computed through the self-weight identity.
pub fn mcv_with(
    smoother: &LocalSmoother<'_>,
    block: &[usize],
    h: f64,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<f64> {
    let fits = block_fits(smoother, block, h, basis, family)?;
    let mut total = 0.0;
    for ((fit, resid), &j) in fits.iter().zip(block) {
        let s = fit.s_self.expect("self-inclusive fit");
        if s >= 1.0 - S_MAX_GAP {
            return Err(infeasible(h, format!("self-weight {s} at row {j}")));
        }
        total += (resid / (1.0 - s)).powi(2);
    }
    Ok(total / block.len() as f64)
}

pub fn mcv(
    data: &Dataset,
    block: &[usize],
    h: f64,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<f64> {
    mcv_with(&LocalSmoother::new(data)?, block, h, basis, family)
}

/// Leave-one-out block criterion by explicit refits with row `j` removed.
/// Slow; kept as a reference for the identity-based [`mcv`].
pub fn mcv_direct(
    data: &Dataset,
    block: &[usize],
    h: f64,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<f64> {
    let sm = LocalSmoother::new(data)?;
    let kernel = KernelSpec::new(family, h, data.dim())?;
    let mut total = 0.0;
    for &j in block {
        let pred = sm.loo_prediction(j, &kernel, basis)?;
        total += (data.y()[j] - pred).powi(2);
    }
    Ok(total / block.len() as f64)
}

/// Feasible mGCV score at `h`, or [`Error::Infeasible`].
pub fn mgcv_with(
    smoother: &LocalSmoother<'_>,
    block: &[usize],
    h: f64,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<CriterionScore> {
    let fits = block_fits(smoother, block, h, basis, family)?;
    let n1 = block.len() as f64;
    let mut rss = 0.0;
    let mut tr = 0.0;
    for (fit, resid) in &fits {
        rss += resid * resid;
        tr += fit.s_self.expect("self-inclusive fit");
    }
    let rss = rss / n1;
    let atr = tr / n1;
    if !(atr > 0.0 && atr < 1.0) {
        return Err(infeasible(
            h,
            format!("average self-weight {atr} outside (0, 1)"),
        ));
    }
    Ok(CriterionScore {
        h,
        mgcv: Some(rss / (1.0 - atr).powi(2)),
        atr: Some(atr),
        rss_block: Some(rss),
        infeasible_reason: None,
    })
}

pub fn mgcv(
    data: &Dataset,
    block: &[usize],
    h: f64,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<CriterionScore> {
    mgcv_with(&LocalSmoother::new(data)?, block, h, basis, family)
}

/// Feasible argmin of `scores` (ties go to the earliest, i.e. smallest, `h`).
pub fn argmin_feasible(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn select_bandwidth_with(
    smoother: &LocalSmoother<'_>,
    block: &[usize],
    grid: &BandwidthGrid,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<BandwidthSelection> {
    let scores: Vec<CriterionScore> = grid
        .candidates
        .par_iter()
        .map(|&h| match mgcv_with(smoother, block, h, basis, family) {
            Ok(score) => Ok(score),
            Err(Error::Infeasible { reason, .. }) => Ok(CriterionScore {
                h,
                mgcv: None,
                atr: None,
                rss_block: None,
                infeasible_reason: Some(reason),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let values: Vec<Option<f64>> = scores.iter().map(|s| s.mgcv).collect();
    let chosen_index = argmin_feasible(&values).ok_or(Error::NoFeasibleBandwidth)?;
    Ok(BandwidthSelection {
        chosen: scores[chosen_index].h,
        chosen_index,
        scores,
    })
}

pub fn select_bandwidth(
    data: &Dataset,
    block: &[usize],
    grid: &BandwidthGrid,
    basis: &PolyBasis,
    family: KernelFamily,
) -> Result<BandwidthSelection> {
    select_bandwidth_with(&LocalSmoother::new(data)?, block, grid, basis, family)
}
