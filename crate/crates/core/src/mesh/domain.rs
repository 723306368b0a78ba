use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower_0, upper_0] x ... x [lower_{d-1}, upper_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::input("box bounds must be non-empty and of equal length"));
        }
        for (a, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::input(format!(
                    "axis {a}: bounds [{lo}, {hi}] must be finite with positive extent"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Grows every axis by `margin` times its extent on both sides.
    pub fn inflate(&self, margin: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| {
                let pad = margin * (hi - lo);
                (lo - pad, hi + pad)
            })
            .unzip();
        Self { lower, upper }
    }

    /// Projects `x` onto the box in place; returns whether anything moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            let c = v.clamp(*lo, *hi);
            if c != *v {
                *v = c;
                moved = true;
            }
        }
        moved
    }

    /// Uniform sample written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (v, (lo, hi)) in out.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = lo + (hi - lo) * rng.random::<f64>();
        }
    }

    /// Maps a point of the unit cube onto the box.
    pub(crate) fn from_unit(&self, unit: &[f64], out: &mut [f64]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.lower[i] + (self.upper[i] - self.lower[i]) * unit[i];
        }
    }
}
