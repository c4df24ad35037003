//! Radially symmetric kernels `K_h(u) = h^(-D) K(u / h)`.
//!
//! Both families are unnormalized so that `K(0) = 1`; any constant factor
//! cancels in the fitted value and in the smoother diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `K(v) = (1 - |v|^2)_+`
    #[default]
    Epanechnikov,
    /// `K(v) = exp(-|v|^2 / 2)`
    Gaussian,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Gaussian => "gaussian",
        }
    }

    /// Profile as a function of the squared scaled radius `|v|^2`.
    #[inline]
    fn profile(self, v2: f64) -> f64 {
        match self {
            KernelFamily::Epanechnikov => (1.0 - v2).max(0.0),
            KernelFamily::Gaussian => (-0.5 * v2).exp(),
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "gaussian" => Ok(KernelFamily::Gaussian),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel family '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Support of a kernel: a closed ball of finite radius or the whole space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Radius(f64),
    Unbounded,
}

/// A kernel family at a fixed bandwidth in a fixed ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    h: f64,
    dim: usize,
    // h^(-D), cached
    scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, h: f64, dim: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::NonPositiveBandwidth(h));
        }
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self {
            family,
            h,
            dim,
            scale: h.powi(-(dim as i32)),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K_h(u)` for an offset vector `u`.
    pub fn value(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: u.len(),
            });
        }
        let r2: f64 = u.iter().map(|v| v * v).sum();
        Ok(self.value_at_sq_radius(r2))
    }

    /// `K_h` evaluated at an offset of squared length `r2`.
    #[inline]
    pub fn value_at_sq_radius(&self, r2: f64) -> f64 {
        self.scale * self.family.profile(r2 / (self.h * self.h))
    }

    /// `K_h(0) = h^(-D)`.
    pub fn at_origin(&self) -> f64 {
        self.scale
    }

    pub fn support_radius(&self) -> Support {
        match self.family {
            KernelFamily::Epanechnikov => Support::Radius(self.h),
            KernelFamily::Gaussian => Support::Unbounded,
        }
    }
}

/// Free-function form of [`KernelSpec::value`].
pub fn kernel_value(spec: &KernelSpec, u: &[f64]) -> Result<f64> {
    spec.value(u)
}

/// Free-function form of [`KernelSpec::support_radius`].
pub fn support_radius(spec: &KernelSpec) -> Support {
    spec.support_radius()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn epa(h: f64, d: usize) -> KernelSpec {
        KernelSpec::new(KernelFamily::Epanechnikov, h, d).unwrap()
    }

    #[test]
    fn epanechnikov_values() {
        assert_eq!(epa(1.0, 1).value(&[0.0]).unwrap(), 1.0);
        assert_eq!(epa(2.0, 1).value(&[1.0]).unwrap(), 0.375);
        assert_eq!(epa(0.7, 2).value(&[0.7, 0.0]).unwrap(), 0.0);
        assert_eq!(epa(0.7, 2).value(&[0.7, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_origin_and_tail() {
        let g = KernelSpec::new(KernelFamily::Gaussian, 0.5, 2).unwrap();
        assert_eq!(g.value(&[0.0, 0.0]).unwrap(), 4.0);
        let expected = 4.0 * (-0.5f64 * 4.0).exp();
        assert!((g.value(&[1.0, 0.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn support_radii() {
        assert_eq!(epa(0.5, 3).support_radius(), Support::Radius(0.5));
        assert_eq!(epa(2.0, 1).support_radius(), Support::Radius(2.0));
        let g = KernelSpec::new(KernelFamily::Gaussian, 0.5, 1).unwrap();
        assert_eq!(g.support_radius(), Support::Unbounded);
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            KernelSpec::new(KernelFamily::Gaussian, 0.0, 1),
            Err(Error::NonPositiveBandwidth(_))
        ));
        assert!(matches!(
            KernelSpec::new(KernelFamily::Gaussian, -1.0, 1),
            Err(Error::NonPositiveBandwidth(_))
        ));
        assert!(matches!(
            epa(1.0, 2).value(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!("triangular".parse::<KernelFamily>().is_err());
        assert_eq!(
            "Gaussian".parse::<KernelFamily>().unwrap(),
            KernelFamily::Gaussian
        );
    }

    fn family() -> impl Strategy<Value = KernelFamily> {
        prop_oneof![
            Just(KernelFamily::Epanechnikov),
            Just(KernelFamily::Gaussian)
        ]
    }

    proptest! {
        #[test]
        fn radial_symmetry_under_plane_rotation(
            fam in family(), h in 0.1f64..3.0, x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let spec = KernelSpec::new(fam, h, 3).unwrap();
            let (s, c) = theta.sin_cos();
            let rotated = [c * x - s * y, s * x + c * y, z];
            let a = spec.value(&[x, y, z]).unwrap();
            let b = spec.value(&rotated).unwrap();
            // compact kernels are flat-zero outside the ball; near the rim the
            // rounding of |u|^2 can matter at the 1e-15 level only
            prop_assert!((a - b).abs() <= 1e-12 * spec.at_origin().max(1.0));
        }

        #[test]
        fn monotone_in_radius(fam in family(), h in 0.1f64..3.0, r1 in 0.0f64..4.0, dr in 0.0f64..2.0) {
            let spec = KernelSpec::new(fam, h, 1).unwrap();
            prop_assert!(spec.value(&[r1 + dr]).unwrap() <= spec.value(&[r1]).unwrap());
        }

        #[test]
        fn bandwidth_scaling_identity(
            fam in family(), h in 0.1f64..3.0, d in 1usize..5, u in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let spec = KernelSpec::new(fam, h, d).unwrap();
            let unit = KernelSpec::new(fam, 1.0, d).unwrap();
            let u = &u[..d];
            let scaled: Vec<f64> = u.iter().map(|v| v / h).collect();
            let lhs = spec.value(u).unwrap();
            let rhs = h.powi(-(d as i32)) * unit.value(&scaled).unwrap();
            // relative to K_h(0): near the compact rim 1 - |v|^2 cancels
            prop_assert!((lhs - rhs).abs() <= 1e-12 * spec.at_origin());
        }
    }
}
