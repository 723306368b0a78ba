//! Compactly supported radial kernels.
//!
//! Only the Wendland C4 function ships. It is normalised so that the value at
//! the origin is one; Shepard weights do not depend on that constant.

use crate::error::{Error, Result};

/// A radial function with compact support `[0, support_radius]`.
pub trait RadialKernel: Send + Sync {
    /// Kernel value at distance `r >= 0`. Callers are trusted to pass a valid
    /// distance; use [`wendland_eval`] for checked evaluation.
    fn eval(&self, r: f64) -> f64;

    fn support_radius(&self) -> f64;
}

/// Wendland C4 function `(1 - σr)_+^6 (35σ²r² + 18σr + 3) / 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WendlandKernel {
    sigma: f64,
}

impl WendlandKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl RadialKernel for WendlandKernel {
    #[inline]
    fn eval(&self, r: f64) -> f64 {
        wendland_unit(self.sigma * r)
    }

    fn support_radius(&self) -> f64 {
        1.0 / self.sigma
    }
}

#[inline]
fn wendland_unit(s: f64) -> f64 {
    if s >= 1.0 {
        return 0.0;
    }
    let t = 1.0 - s;
    let t2 = t * t;
    let t6 = t2 * t2 * t2;
    t6 * (35.0 * s * s + 18.0 * s + 3.0) / 3.0
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("shape parameter must be finite and positive, got {sigma}")))
    }
}

/// Checked evaluation of the normalised Wendland kernel.
pub fn wendland_eval(r: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !r.is_finite() || r < 0.0 {
        return Err(Error::input(format!("distance must be finite and non-negative, got {r}")));
    }
    Ok(wendland_unit(sigma * r))
}

/// Radius `1/σ` of the kernel support.
pub fn support_radius(sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(1.0 / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn value_at_origin_is_one() {
        assert_eq!(wendland_eval(0.0, 2.0).unwrap(), 1.0);
        assert_eq!(wendland_eval(0.0, 0.8).unwrap(), 1.0);
    }

    #[test]
    fn vanishes_at_support_boundary() {
        assert_eq!(wendland_eval(0.5, 2.0).unwrap(), 0.0);
        assert_eq!(wendland_eval(7.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn interior_value() {
        // 0.5^6 * (35 * 0.25 + 18 * 0.5 + 3) / 3
        let expected = 0.015625 * 20.75 / 3.0;
        let got = wendland_eval(0.5, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.108073).abs() < 1e-6);
    }

    #[test]
    fn support_radius_examples() {
        assert_eq!(support_radius(2.0).unwrap(), 0.5);
        assert_eq!(support_radius(0.8).unwrap(), 1.25);
        assert_eq!(support_radius(1.0).unwrap(), 1.0);
        assert!(support_radius(0.0).is_err());
        assert!(support_radius(-1.0).is_err());
    }

    #[test]
    fn rejects_bad_distance() {
        assert!(wendland_eval(-0.1, 1.0).is_err());
        assert!(wendland_eval(f64::NAN, 1.0).is_err());
        assert!(wendland_eval(f64::INFINITY, 1.0).is_err());
        assert!(WendlandKernel::new(f64::NAN).is_err());
    }

    #[test]
    fn c2_at_support_boundary() {
        // value, slope and curvature all vanish at r = 1/σ
        for &sigma in &[0.8, 1.0, 2.0, 5.0] {
            let k = WendlandKernel::new(sigma).unwrap();
            let r0 = 1.0 / sigma;
            let h = 1e-6;
            let left = k.eval(r0 - h);
            assert!(left.abs() < 1e-30);
            let d1 = (k.eval(r0) - k.eval(r0 - h)) / h;
            assert!(d1.abs() < 1e-20, "slope {d1}");
            let d2 = (k.eval(r0 + h) - 2.0 * k.eval(r0) + k.eval(r0 - h)) / (h * h);
            assert!(d2.abs() < 1e-10, "curvature {d2}");
        }
    }

    proptest! {
        #[test]
        fn monotone_non_increasing(sigma in 0.05f64..20.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (r1, r2) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(wendland_eval(r1, sigma).unwrap() >= wendland_eval(r2, sigma).unwrap());
        }

        #[test]
        fn scale_covariance(sigma in 0.05f64..20.0, r in 0.0f64..3.0) {
            let lhs = wendland_eval(r, sigma).unwrap();
            let rhs = wendland_eval(sigma * r, 1.0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-15);
        }

        #[test]
        fn zero_outside_support(sigma in 0.05f64..20.0, extra in 0.0f64..10.0) {
            prop_assert_eq!(wendland_eval(1.0 / sigma + extra, sigma).unwrap(), 0.0);
        }
    }
}
