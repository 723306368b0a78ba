//! Control problems: dynamics, running cost, discount and control grid.

mod eikonal;
mod pde;
pub mod sparse;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use eikonal::{kruzkov_exact, Eikonal, DEFAULT_TARGET_RADIUS};
pub use pde::{
    advection_problem, heat_problem, pyramid_at, sine_bump_at, AdvectionParams, BoundaryKind, Coupling,
    FdGrid, HeatParams, SemiDiscretePde,
};

use crate::error::{Error, Result};
use crate::mesh::BoxDomain;

/// How a problem advances its state by one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepScheme {
    ExplicitEuler,
    ImplicitEuler,
    Imex,
}

/// Closed ball the minimum-time dynamics must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Target {
    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 <= self.radius * self.radius
    }
}

/// A state described by value or by a named initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Point { coords: Vec<f64> },
    /// `k sin(pi x1) sin(pi x2)` on the unit square, zero elsewhere.
    SineBump { k: f64 },
    /// `max(2 - (2|x1 - 1/2| + 1)(2|x2 - 1/2| + 1), 0)`
    Pyramid,
}

/// Infinite-horizon discounted control problem with scalar controls.
pub trait ControlProblem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `out = f(x, u)`
    fn drift(&self, x: &[f64], u: f64, out: &mut [f64]);

    fn running_cost(&self, x: &[f64], u: f64) -> f64;

    /// Discount rate `lambda > 0`.
    fn discount(&self) -> f64;

    /// Default control samples `U_M`.
    fn controls(&self) -> &[f64];

    fn domain(&self) -> &BoxDomain;

    fn scheme(&self) -> StepScheme {
        StepScheme::ExplicitEuler
    }

    /// One time step of the problem's scheme; explicit Euler by default.
    fn step(&self, x: &[f64], u: f64, dt: f64, out: &mut [f64]) -> Result<()> {
        self.drift(x, u, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + dt * *o;
        }
        Ok(())
    }

    /// Known bound `sup |f|` over the domain and controls.
    fn max_speed(&self) -> Option<f64> {
        None
    }

    fn exact_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn target(&self) -> Option<&Target> {
        None
    }

    /// Resolves a [`StateSpec`] to a state vector.
    fn state(&self, spec: &StateSpec) -> Result<Vec<f64>> {
        match spec {
            StateSpec::Point { coords } if coords.len() == self.dim() => Ok(coords.clone()),
            StateSpec::Point { coords } => Err(Error::input(format!(
                "state has dimension {}, problem has {}",
                coords.len(),
                self.dim()
            ))),
            other => Err(Error::Unsupported(format!("{other:?} for problem {}", self.name()))),
        }
    }
}

/// `count` equispaced controls on `[lo, hi]`, both endpoints included.
pub fn control_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

type DriftFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;
type CostFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A problem assembled from closures; handy for synthetic tests.
#[derive(Clone)]
pub struct CustomProblem {
    name: String,
    dim: usize,
    drift: Arc<DriftFn>,
    cost: Arc<CostFn>,
    lambda: f64,
    controls: Vec<f64>,
    domain: BoxDomain,
    max_speed: Option<f64>,
    exact: Option<Arc<ValueFn>>,
    target: Option<Target>,
}

impl fmt::Debug for CustomProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lambda", &self.lambda)
            .field("controls", &self.controls)
            .finish_non_exhaustive()
    }
}

impl CustomProblem {
    pub fn new(
        name: impl Into<String>,
        domain: BoxDomain,
        lambda: f64,
        controls: Vec<f64>,
        drift: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        cost: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::input(format!("discount must be positive, got {lambda}")));
        }
        if controls.is_empty() {
            return Err(Error::input("control set must be non-empty"));
        }
        Ok(Self {
            name: name.into(),
            dim: domain.dim(),
            drift: Arc::new(drift),
            cost: Arc::new(cost),
            lambda,
            controls,
            domain,
            max_speed: None,
            exact: None,
            target: None,
        })
    }

    /// `f = 0`, `g = c` on `[-1,1]^dim`; the value function is `c / lambda`.
    pub fn stationary(dim: usize, c: f64, lambda: f64) -> Self {
        let domain = BoxDomain::cube(dim, -1.0, 1.0).expect("valid cube");
        let mut p = Self::new("stationary", domain, lambda, vec![0.0], |_, _, out| out.fill(0.0), move |_, _| c)
            .expect("valid parameters");
        p.max_speed = Some(0.0);
        p.exact = Some(Arc::new(move |_| c / lambda));
        p
    }

    pub fn with_max_speed(mut self, m: f64) -> Self {
        self.max_speed = Some(m);
        self
    }

    pub fn with_exact(mut self, v: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(v));
        self
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_controls(mut self, controls: Vec<f64>) -> Self {
        self.controls = controls;
        self
    }
}

impl ControlProblem for CustomProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, x: &[f64], u: f64, out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    fn running_cost(&self, x: &[f64], u: f64) -> f64 {
        (self.cost)(x, u)
    }

    fn discount(&self) -> f64 {
        self.lambda
    }

    fn controls(&self) -> &[f64] {
        &self.controls
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn max_speed(&self) -> Option<f64> {
        self.max_speed
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        self.exact.as_ref().map(|v| v(x))
    }

    fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }
}
