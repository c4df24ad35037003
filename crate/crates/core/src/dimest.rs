//! Maximum-likelihood intrinsic dimension from nearest-neighbor distances.
//!
//! For a point `x` with neighbor distances `T_1 <= ... <= T_k` (self
//! excluded), the local estimate is
//!
//! ```text
//! m_k(x) = [ 1/(k-1) * sum_{j=1}^{k-1} ln(T_k / T_j) ]^(-1)
//! ```
//!
//! and the block estimate is the arithmetic mean of the local estimates.
//! Points whose log-sum is not positive and finite (duplicates, or all `k`
//! distances tied) are skipped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locpoly::validate_block;
use crate::neighbors::{NeighborIndex, PointSet};

/// Neighbor count used in the reference experiment.
pub const DEFAULT_K: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub k: usize,
    /// `(row id, local estimate)` for every non-skipped block point, in block order.
    pub per_point: Vec<(usize, f64)>,
    pub d_hat: f64,
    pub skipped: Vec<usize>,
}

/// Local estimate from the ascending distances `T_1..T_k`; `None` if degenerate.
pub fn local_mle(distances: &[f64]) -> Option<f64> {
    let k = distances.len();
    if k < 2 {
        return None;
    }
    let tk = distances[k - 1];
    if !(distances[0] > 0.0) || !tk.is_finite() {
        return None;
    }
    let log_sum: f64 = distances[..k - 1].iter().map(|t| (tk / t).ln()).sum();
    if !(log_sum > 0.0) || !log_sum.is_finite() {
        return None;
    }
    Some((k - 1) as f64 / log_sum)
}

pub fn estimate_dimension(
    points: &PointSet,
    block: &[usize],
    k: usize,
    index: &NeighborIndex,
) -> Result<DimEstimate> {
    let n = points.len();
    if k < 3 || k + 1 > n {
        return Err(Error::KOutOfRange {
            k,
            max: n.saturating_sub(1),
        });
    }
    if index.len() != n || index.dim() != points.dim() {
        return Err(Error::InvalidConfig(
            "neighbor index was not built from this point set".into(),
        ));
    }
    validate_block(block, n)?;

    let locals: Vec<Option<f64>> = block
        .par_iter()
        .map(|&id| {
            let nn = index.knn(points.row(id), k, Some(id))?;
            let dists: Vec<f64> = nn.iter().map(|n| n.distance).collect();
            Ok(local_mle(&dists))
        })
        .collect::<Result<_>>()?;

    let mut per_point = Vec::with_capacity(block.len());
    let mut skipped = Vec::new();
    for (&id, est) in block.iter().zip(locals) {
        match est {
            Some(m) => per_point.push((id, m)),
            None => skipped.push(id),
        }
    }
    if per_point.is_empty() {
        return Err(Error::AllPointsDegenerate);
    }
    let d_hat = per_point.iter().map(|(_, m)| m).sum::<f64>() / per_point.len() as f64;
    Ok(DimEstimate {
        k,
        per_point,
        d_hat,
        skipped,
    })
}
