use std::f64::consts::PI;

use super::{ControlProblem, StateSpec, Target};
use crate::error::Result;
use crate::mesh::BoxDomain;

/// Default radius of the ball around the origin that counts as "arrived".
pub const DEFAULT_TARGET_RADIUS: f64 = 0.05;

/// Minimum-time problem in `[-1,1]^2` with unit-speed heading control
/// `f(x,u) = (cos u, sin u)`, `g = 1`, `lambda = 1` and target at the origin.
#[derive(Debug, Clone)]
pub struct Eikonal {
    controls: Vec<f64>,
    domain: BoxDomain,
    target: Target,
}

impl Default for Eikonal {
    fn default() -> Self {
        Self::new(16, DEFAULT_TARGET_RADIUS)
    }
}

impl Eikonal {
    /// `n_controls` equispaced headings in `[0, 2pi)`.
    pub fn new(n_controls: usize, target_radius: f64) -> Self {
        let controls = (0..n_controls.max(1))
            .map(|k| 2.0 * PI * k as f64 / n_controls.max(1) as f64)
            .collect();
        Self {
            controls,
            domain: BoxDomain::cube(2, -1.0, 1.0).expect("valid square"),
            target: Target {
                center: vec![0.0, 0.0],
                radius: target_radius,
            },
        }
    }

    pub fn with_controls(mut self, controls: Vec<f64>) -> Self {
        self.controls = controls;
        self
    }
}

/// Kruzkov transform of the distance to the origin, `1 - exp(-|x|)`.
pub fn kruzkov_exact(x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1.0 - (-r).exp()
}

impl ControlProblem for Eikonal {
    fn name(&self) -> &str {
        "eikonal"
    }

    fn dim(&self) -> usize {
        2
    }

    fn drift(&self, _x: &[f64], u: f64, out: &mut [f64]) {
        out[0] = u.cos();
        out[1] = u.sin();
    }

    fn running_cost(&self, _x: &[f64], _u: f64) -> f64 {
        1.0
    }

    fn discount(&self) -> f64 {
        1.0
    }

    fn controls(&self) -> &[f64] {
        &self.controls
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn max_speed(&self) -> Option<f64> {
        Some(1.0)
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(kruzkov_exact(x))
    }

    fn target(&self) -> Option<&Target> {
        Some(&self.target)
    }

    fn state(&self, spec: &StateSpec) -> Result<Vec<f64>> {
        match spec {
            StateSpec::Point { coords } if coords.len() == 2 => Ok(coords.clone()),
            _ => Err(crate::error::Error::input("eikonal states are points in the plane")),
        }
    }
}
