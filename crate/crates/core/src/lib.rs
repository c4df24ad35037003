//! Local polynomial regression for predictors that concentrate near a
//! low-dimensional manifold.
//!
//! The estimator fits a degree-`q` polynomial in all `D` ambient coordinates
//! by kernel-weighted least squares; no manifold is estimated. The bandwidth
//! is chosen on a block of points by a blockwise generalized cross-validation
//! criterion over candidates `lambda * n^(-1/(d + 4))`, where `d` is the
//! intrinsic dimension estimated from nearest-neighbor distance ratios.
//!
//! ```text
//! neighbors ─┬─ dimest ─────────────┐
//! kernels ───┴─ locpoly ─ bandwidth ┴─ synth
//! ```

// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod dimest;
pub mod error;
pub mod kernels;
pub mod locpoly;
pub mod neighbors;
pub mod synth;

pub use bandwidth::{
    candidate_bandwidths, default_lambdas, mcv, mcv_direct, mgcv, select_bandwidth, BandwidthGrid,
    BandwidthSelection, CriterionScore,
};
pub use dimest::{estimate_dimension, DimEstimate};
pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec, Support};
pub use locpoly::{
    build_design, fit_block, local_fit, loo_prediction, standardize, Dataset, LocalFit,
    LocalSmoother, PolyBasis, Standardizer,
};
pub use neighbors::{Neighbor, NeighborIndex, PointSet};
pub use synth::{
    generate, middle_block, noise_sweep, rate_study, run_experiment, true_regression,
    ExperimentOptions, ExperimentResult, GenConfig, GeneratedData,
};
