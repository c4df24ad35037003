//! Local polynomial regression at a point.
//!
//! The fit at `x` minimizes `sum_i K_h(X_i - x) (Y_i - P(X_i - x))^2` over
//! polynomials `P` of total degree at most `q`; the intercept of `P` is the
//! estimate. The weighted design is solved through a truncated SVD of the
//! `sqrt(w)`-scaled design, never through the normal equations, so that
//! designs built from points concentrated near a low-dimensional manifold
//! (tiny extent in the normal directions) are handled without squaring the
//! condition number. Directions whose singular value falls below
//! `eps * max(m, p) * sigma_max` are dropped, which yields the minimum-norm
//! solution and a reduced `effective_rank`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Support};
use crate::neighbors::{NeighborIndex, PointSet};

/// Predictors plus scalar responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: PointSet,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: PointSet, y: Vec<f64>) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::ResponseLength {
                expected: x.len(),
                found: y.len(),
            });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn x(&self) -> &PointSet {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same predictors, new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y)
    }

    /// Same responses, a subset of predictor columns.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        Self::new(self.x.select_columns(columns)?, self.y.clone())
    }
}

/// Per-coordinate affine map to zero mean and unit sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &PointSet) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::TooFewObservations {
                needed: 2,
                found: n,
            });
        }
        let d = points.dim();
        let mut means = vec![0.0; d];
        for row in points.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut ss = vec![0.0; d];
        for row in points.rows() {
            for ((s, v), m) in ss.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let sds: Vec<f64> = ss.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect();
        if let Some(coord) = sds.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::DegenerateCoordinate { coord });
        }
        Ok(Self { means, sds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_all(&self, points: &PointSet) -> Result<PointSet> {
        if points.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: points.dim(),
            });
        }
        let coords = points.rows().flat_map(|r| self.apply(r)).collect();
        PointSet::from_flat(coords, self.dim())
    }
}

/// Standardizes the predictors (sample sd, denominator `n - 1`). `Y` is untouched.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardizer)> {
    let st = Standardizer::fit(data.x())?;
    let x = st.apply_all(data.x())?;
    Ok((Dataset::new(x, data.y.clone())?, st))
}

/// Monomial basis of total degree `<= q` in `D` variables, graded
/// lexicographic, constant term first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyBasis {
    degree: usize,
    dim: usize,
    exponents: Vec<Vec<u32>>,
}

impl PolyBasis {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut exponents = Vec::new();
        for total in 0..=degree {
            let mut cur = vec![0u32; dim];
            push_compositions(total as u32, 0, &mut cur, &mut exponents);
        }
        Ok(Self {
            degree,
            dim,
            exponents,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Writes the monomials of `offset` into `out` (length `self.len()`).
    pub fn eval_into(&self, offset: &[f64], out: &mut [f64]) {
        for (slot, alpha) in out.iter_mut().zip(&self.exponents) {
            *slot = offset
                .iter()
                .zip(alpha)
                .fold(1.0, |acc, (&u, &a)| acc * u.powi(a as i32));
        }
    }
}

// Exponent vectors of the given total, first coordinate descending.
fn push_compositions(remaining: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for a in (0..=remaining).rev() {
        cur[pos] = a;
        push_compositions(remaining - a, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Design matrix with rows `P_alpha(X_i - x)` over the basis.
pub fn build_design(points: &PointSet, x: &[f64], basis: &PolyBasis) -> Result<DMatrix<f64>> {
    if x.len() != points.dim() || basis.dim() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            found: if x.len() != points.dim() {
                x.len()
            } else {
                basis.dim()
            },
        });
    }
    let p = basis.len();
    let mut design = DMatrix::zeros(points.len(), p);
    let mut offset = vec![0.0; x.len()];
    let mut row = vec![0.0; p];
    for (i, xi) in points.rows().enumerate() {
        for ((o, a), b) in offset.iter_mut().zip(xi).zip(x) {
            *o = a - b;
        }
        basis.eval_into(&offset, &mut row);
        for (c, v) in row.iter().enumerate() {
            design[(i, c)] = *v;
        }
    }
    Ok(design)
}

/// Outcome of a single weighted least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub coefficients: Vec<f64>,
    pub fitted: f64,
    /// Smoother weight of the query point on itself, when the query is an
    /// included data row.
    pub s_self: Option<f64>,
    pub support_count: usize,
    pub effective_rank: usize,
}

impl LocalFit {
    pub fn is_full_rank(&self) -> bool {
        self.effective_rank == self.coefficients.len()
    }
}

/// Solution of a weighted least-squares problem via truncated SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub coefficients: Vec<f64>,
    pub effective_rank: usize,
    /// `e1' (X'WX)^+ e1`
    pub intercept_precision_inv: f64,
}

/// Thin SVD `a = u diag(sigma) v'` computed from a QR (or LQ) reduction to
/// a square factor. nalgebra's SVD of a rectangular matrix can return
/// inaccurate singular vectors, while the square case is reliable.
fn thin_svd(a: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, p) = a.shape();
    if m >= p {
        let qr = a.qr();
        let (q, r) = (qr.q(), qr.r());
        let svd = r.svd(true, true);
        let u = q * svd.u.expect("U requested");
        let v = svd.v_t.expect("V^T requested").transpose();
        (u, svd.singular_values, v)
    } else {
        // a' = q r, so a = r' q'
        let qr = a.transpose().qr();
        let (q, r) = (qr.q(), qr.r());
        let svd = r.transpose().svd(true, true);
        let v = q * svd.v_t.expect("V^T requested").transpose();
        (svd.u.expect("U requested"), svd.singular_values, v)
    }
}

/// Minimum-norm solution of `min_b sum_i w_i (y_i - design_i b)^2`.
///
/// All weights must be positive.
pub fn solve_wls(design: &DMatrix<f64>, weights: &[f64], y: &[f64]) -> WlsSolution {
    let (m, p) = design.shape();
    debug_assert_eq!(weights.len(), m);
    debug_assert_eq!(y.len(), m);
    let mut a = design.clone();
    let mut b = DVector::zeros(m);
    for i in 0..m {
        let s = weights[i].sqrt();
        a.row_mut(i).scale_mut(s);
        b[i] = s * y[i];
    }
    let (u, sigma, v) = thin_svd(a);
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let tol = f64::EPSILON * m.max(p) as f64 * sigma_max;

    let mut coefficients = vec![0.0; p];
    let mut rank = 0;
    let mut e1 = 0.0;
    for k in 0..sigma.len() {
        let s = sigma[k];
        if !(s > tol) {
            continue;
        }
        rank += 1;
        let proj = u.column(k).dot(&b) / s;
        let vk = v.column(k);
        for (c, coef) in coefficients.iter_mut().enumerate() {
            *coef += vk[c] * proj;
        }
        e1 += (vk[0] / s) * (vk[0] / s);
    }
    WlsSolution {
        coefficients,
        effective_rank: rank,
        intercept_precision_inv: e1,
    }
}

/// Neighbor-indexed view of a dataset for repeated local fits.
#[derive(Debug, Clone)]
pub struct LocalSmoother<'a> {
    data: &'a Dataset,
    index: NeighborIndex,
}

impl<'a> LocalSmoother<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        let index = NeighborIndex::build(data.x().clone())?;
        Ok(Self { data, index })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    fn check(&self, x: &[f64], kernel: &KernelSpec, basis: &PolyBasis) -> Result<()> {
        let d = self.data.dim();
        for found in [x.len(), kernel.dim(), basis.dim()] {
            if found != d {
                return Err(Error::DimensionMismatch { expected: d, found });
            }
        }
        Ok(())
    }

    /// Local polynomial fit at `x`, optionally leaving one row out.
    pub fn local_fit(
        &self,
        x: &[f64],
        kernel: &KernelSpec,
        basis: &PolyBasis,
        exclude: Option<usize>,
    ) -> Result<LocalFit> {
        self.check(x, kernel, basis)?;
        let n = self.data.len();
        if let Some(id) = exclude {
            if id >= n {
                return Err(Error::InvalidRow { id, n });
            }
        }
        let points = self.data.x();
        let candidates: Vec<usize> = match kernel.support_radius() {
            Support::Radius(r) => self.index.radius_query(x, r)?,
            Support::Unbounded => (0..n).collect(),
        };
        let radius = match kernel.support_radius() {
            Support::Radius(r) => r,
            Support::Unbounded => f64::INFINITY,
        };

        let p = basis.len();
        let mut rows: Vec<f64> = Vec::with_capacity(candidates.len() * p);
        let mut weights = Vec::with_capacity(candidates.len());
        let mut ys = Vec::with_capacity(candidates.len());
        let mut includes_self = false;
        let mut offset = vec![0.0; x.len()];
        let mut mono = vec![0.0; p];
        for id in candidates {
            if Some(id) == exclude {
                continue;
            }
            let xi = points.row(id);
            let mut r2 = 0.0;
            for ((o, a), b) in offset.iter_mut().zip(xi).zip(x) {
                *o = a - b;
                r2 += *o * *o;
            }
            // compact kernels vanish on the rim; keep rim points out of the
            // design so their responses cannot enter the arithmetic
            if !(r2.sqrt() < radius) {
                continue;
            }
            let w = kernel.value_at_sq_radius(r2);
            if !(w > 0.0) {
                continue;
            }
            includes_self |= r2 == 0.0;
            basis.eval_into(&offset, &mut mono);
            rows.extend_from_slice(&mono);
            weights.push(w);
            ys.push(self.data.y()[id]);
        }
        if weights.is_empty() {
            return Err(Error::NoSupport { row: None });
        }
        let design = DMatrix::from_row_slice(weights.len(), p, &rows);
        let sol = solve_wls(&design, &weights, &ys);
        let s_self = includes_self.then(|| sol.intercept_precision_inv * kernel.at_origin());
        Ok(LocalFit {
            fitted: sol.coefficients[0],
            coefficients: sol.coefficients,
            s_self,
            support_count: weights.len(),
            effective_rank: sol.effective_rank,
        })
    }

    /// Self-inclusive fits at each block row, in block order.
    pub fn fit_block(
        &self,
        block: &[usize],
        kernel: &KernelSpec,
        basis: &PolyBasis,
    ) -> Result<Vec<LocalFit>> {
        validate_block(block, self.data.len())?;
        block
            .par_iter()
            .map(|&j| {
                self.local_fit(self.data.x().row(j), kernel, basis, None)
                    .map_err(|e| match e {
                        Error::NoSupport { .. } => Error::NoSupport { row: Some(j) },
                        other => other,
                    })
            })
            .collect()
    }

    /// `m_{-j,h}(X_j)`: the fit at `X_j` with row `j` removed.
    pub fn loo_prediction(&self, j: usize, kernel: &KernelSpec, basis: &PolyBasis) -> Result<f64> {
        let n = self.data.len();
        if j >= n {
            return Err(Error::InvalidRow { id: j, n });
        }
        self.local_fit(self.data.x().row(j), kernel, basis, Some(j))
            .map(|f| f.fitted)
            .map_err(|e| match e {
                Error::NoSupport { .. } => Error::NoSupport { row: Some(j) },
                other => other,
            })
    }
}

pub(crate) fn validate_block(block: &[usize], n: usize) -> Result<()> {
    if block.is_empty() {
        return Err(Error::InvalidBlock("block is empty".into()));
    }
    let mut seen = vec![false; n];
    for &id in block {
        if id >= n {
            return Err(Error::InvalidRow { id, n });
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::InvalidBlock(format!("row {id} appears twice")));
        }
    }
    Ok(())
}

/// One-shot fit at `x`; builds a neighbor index internally.
pub fn local_fit(
    data: &Dataset,
    x: &[f64],
    kernel: &KernelSpec,
    basis: &PolyBasis,
    exclude: Option<usize>,
) -> Result<LocalFit> {
    LocalSmoother::new(data)?.local_fit(x, kernel, basis, exclude)
}

pub fn fit_block(
    data: &Dataset,
    block: &[usize],
    kernel: &KernelSpec,
    basis: &PolyBasis,
) -> Result<Vec<LocalFit>> {
    LocalSmoother::new(data)?.fit_block(block, kernel, basis)
}

pub fn loo_prediction(
    data: &Dataset,
    j: usize,
    kernel: &KernelSpec,
    basis: &PolyBasis,
) -> Result<f64> {
    LocalSmoother::new(data)?.loo_prediction(j, kernel, basis)
}
