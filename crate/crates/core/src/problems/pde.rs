//! Finite-difference semi-discretisations of the bilinear advection and
//! nonlinear heat control problems on square grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::sparse::{cg_weighted, gauss_seidel_shifted, CsrMatrix};
use super::{control_grid, ControlProblem, StateSpec, StepScheme};
use crate::error::{Error, Result};
use crate::mesh::BoxDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    DirichletZero,
    NeumannZero,
}

/// Vertex-centred `n x n` grid on `[lo, hi]^2`; node `(i, j)` has index
/// `i + n j` and sits at `(lo + i h, lo + j h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdGrid {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub boundary: BoundaryKind,
}

impl FdGrid {
    pub fn new(n: usize, lo: f64, hi: f64, boundary: BoundaryKind) -> Result<Self> {
        if n < 3 {
            return Err(Error::input(format!("need at least 3 nodes per axis, got {n}")));
        }
        if !(hi > lo) {
            return Err(Error::input("grid interval must have positive length"));
        }
        Ok(Self { n, lo, hi, boundary })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, idx: usize) -> (f64, f64) {
        let h = self.spacing();
        let (i, j) = (idx % self.n, idx / self.n);
        (self.lo + i as f64 * h, self.lo + j as f64 * h)
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (a, b) = self.node(k);
                f(a, b)
            })
            .collect()
    }
}

/// `k sin(pi x1) sin(pi x2)` on `[0,1]^2`, zero outside.
pub fn sine_bump_at(k: f64, x1: f64, x2: f64) -> f64 {
    if (0.0..=1.0).contains(&x1) && (0.0..=1.0).contains(&x2) {
        k * (PI * x1).sin() * (PI * x2).sin()
    } else {
        0.0
    }
}

pub fn pyramid_at(x1: f64, x2: f64) -> f64 {
    (2.0 - (2.0 * (x1 - 0.5).abs() + 1.0) * (2.0 * (x2 - 0.5).abs() + 1.0)).max(0.0)
}

/// How the scalar control enters the state equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    /// `u * y`
    Bilinear,
    /// `B * u`
    Affine(Vec<f64>),
}

/// `y' = A y + coupling(u) + beta (y^2 - y^3)` on an [`FdGrid`], with
/// running cost `w |y|^2 + gamma u^2`.
#[derive(Debug, Clone)]
pub struct SemiDiscretePde {
    name: String,
    grid: FdGrid,
    operator: CsrMatrix,
    /// Quadrature weights `W` such that `W A` is symmetric (Neumann case).
    sym: Option<(Vec<f64>, CsrMatrix)>,
    coupling: Coupling,
    beta: Option<f64>,
    gamma: f64,
    lambda: f64,
    controls: Vec<f64>,
    domain: BoxDomain,
    scheme: StepScheme,
    plain_norm: bool,
}

/// Parameters of the advection problem; defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvectionParams {
    pub nodes_per_axis: usize,
    pub velocity: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub control_range: [f64; 2],
    pub controls: usize,
    /// Use the plain Euclidean norm in the running cost instead of the
    /// cell-area weighted one.
    pub plain_norm: bool,
}

impl Default for AdvectionParams {
    fn default() -> Self {
        Self {
            nodes_per_axis: 101,
            velocity: 1.0,
            gamma: 1e-5,
            lambda: 1.0,
            control_range: [-2.0, 0.0],
            controls: 21,
            plain_norm: false,
        }
    }
}

/// Parameters of the nonlinear heat problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatParams {
    pub nodes_per_axis: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub control_range: [f64; 2],
    pub controls: usize,
    /// Amplitude `k` of the sine bump used as the control shape `B`.
    pub control_shape_k: f64,
    pub plain_norm: bool,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            nodes_per_axis: 31,
            alpha: 0.01,
            beta: 6.0,
            gamma: 1e-4,
            lambda: 1.0,
            control_range: [-2.0, 0.0],
            controls: 41,
            control_shape_k: 1.0,
            plain_norm: false,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive, got {v}")))
    }
}

/// First-order upwind transport `-v (d/dx1 + d/dx2)` on `[0,5]^2` with zero
/// inflow, plus bilinear control.
pub fn advection_problem(p: &AdvectionParams) -> Result<SemiDiscretePde> {
    check_positive("lambda", p.lambda)?;
    if p.gamma < 0.0 || p.controls == 0 {
        return Err(Error::input("gamma must be non-negative and the control grid non-empty"));
    }
    let grid = FdGrid::new(p.nodes_per_axis, 0.0, 5.0, BoundaryKind::DirichletZero)?;
    let n = grid.n;
    let h = grid.spacing();
    let c = p.velocity.abs() / h;
    let mut t = Vec::with_capacity(3 * grid.len());
    for j in 0..n {
        for i in 0..n {
            let k = i + n * j;
            if c == 0.0 {
                continue;
            }
            t.push((k, k, -2.0 * c));
            // upstream neighbours; missing ones are the zero inflow boundary
            if p.velocity > 0.0 {
                if i > 0 {
                    t.push((k, k - 1, c));
                }
                if j > 0 {
                    t.push((k, k - n, c));
                }
            } else {
                if i + 1 < n {
                    t.push((k, k + 1, c));
                }
                if j + 1 < n {
                    t.push((k, k + n, c));
                }
            }
        }
    }
    let operator = CsrMatrix::from_triplets(grid.len(), t);
    let d = grid.len();
    Ok(SemiDiscretePde {
        name: "advection".into(),
        operator,
        sym: None,
        coupling: Coupling::Bilinear,
        beta: None,
        gamma: p.gamma,
        lambda: p.lambda,
        controls: control_grid(p.control_range[0], p.control_range[1], p.controls),
        domain: BoxDomain::cube(d, -2.0, 2.0)?,
        scheme: StepScheme::ImplicitEuler,
        plain_norm: p.plain_norm,
        grid,
    })
}

/// `alpha Laplacian` with homogeneous Neumann data on `[0,1]^2` (ghost-node
/// reflection), affine control with shape `B`, nonlinearity `beta (y^2 - y^3)`.
pub fn heat_problem(p: &HeatParams) -> Result<SemiDiscretePde> {
    check_positive("lambda", p.lambda)?;
    check_positive("alpha", p.alpha)?;
    if p.gamma < 0.0 || p.controls == 0 {
        return Err(Error::input("gamma must be non-negative and the control grid non-empty"));
    }
    let grid = FdGrid::new(p.nodes_per_axis, 0.0, 1.0, BoundaryKind::NeumannZero)?;
    let n = grid.n;
    let h2 = grid.spacing() * grid.spacing();
    let s = p.alpha / h2;
    let mut t = Vec::with_capacity(5 * grid.len());
    // 1D stencil with reflected ghost: interior (1,-2,1), ends (-2, 2)
    let axis = |m: usize, step: usize, k: usize, t: &mut Vec<(usize, usize, f64)>| {
        t.push((k, k, -2.0 * s));
        if m == 0 {
            t.push((k, k + step, 2.0 * s));
        } else if m + 1 == n {
            t.push((k, k - step, 2.0 * s));
        } else {
            t.push((k, k - step, s));
            t.push((k, k + step, s));
        }
    };
    for j in 0..n {
        for i in 0..n {
            let k = i + n * j;
            axis(i, 1, k, &mut t);
            axis(j, n, k, &mut t);
        }
    }
    let operator = CsrMatrix::from_triplets(grid.len(), t);
    let edge = |m: usize| if m == 0 || m + 1 == n { 0.5 } else { 1.0 };
    let weights: Vec<f64> = (0..grid.len()).map(|k| edge(k % n) * edge(k / n)).collect();
    let sym = operator.scale_rows(&weights);
    let shape = grid.sample(|a, b| sine_bump_at(p.control_shape_k, a, b));
    let d = grid.len();
    Ok(SemiDiscretePde {
        name: "heat".into(),
        operator,
        sym: Some((weights, sym)),
        coupling: Coupling::Affine(shape),
        beta: Some(p.beta),
        gamma: p.gamma,
        lambda: p.lambda,
        controls: control_grid(p.control_range[0], p.control_range[1], p.controls),
        domain: BoxDomain::cube(d, -2.0, 2.0)?,
        scheme: StepScheme::Imex,
        plain_norm: p.plain_norm,
        grid,
    })
}

impl SemiDiscretePde {
    pub fn grid(&self) -> &FdGrid {
        &self.grid
    }

    pub fn operator(&self) -> &CsrMatrix {
        &self.operator
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    /// Weights `W` making `W A` symmetric, when the operator has them.
    pub fn symmetrizer(&self) -> Option<&[f64]> {
        self.sym.as_ref().map(|(w, _)| w.as_slice())
    }

    pub fn with_controls(mut self, controls: Vec<f64>) -> Self {
        self.controls = controls;
        self
    }

    /// `k sin(pi x1) sin(pi x2) chi_[0,1]^2` sampled on the grid.
    pub fn ic_class(&self, k: f64) -> Result<Vec<f64>> {
        if !(k > 0.0 && k <= 1.0) {
            return Err(Error::input(format!("amplitude k must lie in (0, 1], got {k}")));
        }
        Ok(self.grid.sample(|a, b| sine_bump_at(k, a, b)))
    }

    pub fn pyramid_ic(&self) -> Vec<f64> {
        self.grid.sample(pyramid_at)
    }

    fn nonlinearity(&self, x: &[f64], out: &mut [f64]) {
        match self.beta {
            Some(beta) => {
                for (o, y) in out.iter_mut().zip(x) {
                    *o = beta * (y * y - y * y * y);
                }
            }
            None => out.fill(0.0),
        }
    }

    fn state_weight(&self) -> f64 {
        if self.plain_norm {
            1.0
        } else {
            self.grid.cell_area()
        }
    }
}

impl ControlProblem for SemiDiscretePde {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn drift(&self, x: &[f64], u: f64, out: &mut [f64]) {
        self.operator.mul_vec(x, out);
        match &self.coupling {
            Coupling::Bilinear => {
                for (o, y) in out.iter_mut().zip(x) {
                    *o += u * y;
                }
            }
            Coupling::Affine(b) => {
                for (o, bi) in out.iter_mut().zip(b) {
                    *o += bi * u;
                }
            }
        }
        if let Some(beta) = self.beta {
            for (o, y) in out.iter_mut().zip(x) {
                *o += beta * (y * y - y * y * y);
            }
        }
    }

    fn running_cost(&self, x: &[f64], u: f64) -> f64 {
        let y2: f64 = x.iter().map(|v| v * v).sum();
        self.state_weight() * y2 + self.gamma * u * u
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

    fn scheme(&self) -> StepScheme {
        self.scheme
    }

    fn step(&self, x: &[f64], u: f64, dt: f64, out: &mut [f64]) -> Result<()> {
        match self.scheme {
            StepScheme::ExplicitEuler => {
                self.drift(x, u, out);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi + dt * *o;
                }
            }
            StepScheme::ImplicitEuler => {
                // (I - dt (A + u I)) x' = x  [+ dt B u for affine coupling]
                let (shift, mut rhs) = match &self.coupling {
                    Coupling::Bilinear => (1.0 - dt * u, x.to_vec()),
                    Coupling::Affine(b) => (1.0, x.iter().zip(b).map(|(xi, bi)| xi + dt * bi * u).collect()),
                };
                if self.beta.is_some() {
                    let mut nl = vec![0.0; x.len()];
                    self.nonlinearity(x, &mut nl);
                    for (r, v) in rhs.iter_mut().zip(&nl) {
                        *r += dt * v;
                    }
                }
                out.copy_from_slice(x);
                gauss_seidel_shifted(&self.operator, shift, dt, &rhs, out)?;
            }
            StepScheme::Imex => {
                // (I - dt A) x' = x + dt (coupling(u) + N(x))
                let mut rhs = vec![0.0; x.len()];
                self.nonlinearity(x, &mut rhs);
                match &self.coupling {
                    Coupling::Bilinear => {
                        for (r, xi) in rhs.iter_mut().zip(x) {
                            *r = xi + dt * (*r + u * xi);
                        }
                    }
                    Coupling::Affine(b) => {
                        for ((r, xi), bi) in rhs.iter_mut().zip(x).zip(b) {
                            *r = xi + dt * (*r + bi * u);
                        }
                    }
                }
                out.copy_from_slice(x);
                match &self.sym {
                    Some((w, s)) => {
                        let wrhs: Vec<f64> = rhs.iter().zip(w).map(|(r, wi)| r * wi).collect();
                        cg_weighted(w, s, dt, &wrhs, out)?;
                    }
                    None => {
                        gauss_seidel_shifted(&self.operator, 1.0, dt, &rhs, out)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn state(&self, spec: &StateSpec) -> Result<Vec<f64>> {
        match spec {
            StateSpec::Point { coords } if coords.len() == self.dim() => Ok(coords.clone()),
            StateSpec::Point { coords } => Err(Error::input(format!(
                "state has dimension {}, problem has {}",
                coords.len(),
                self.dim()
            ))),
            StateSpec::SineBump { k } => self.ic_class(*k),
            StateSpec::Pyramid => Ok(self.pyramid_ic()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_advection() -> SemiDiscretePde {
        advection_problem(&AdvectionParams {
            nodes_per_axis: 11,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_heat() -> SemiDiscretePde {
        heat_problem(&HeatParams {
            nodes_per_axis: 9,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(advection_problem(&AdvectionParams::default()).unwrap().dim(), 10201);
        assert_eq!(heat_problem(&HeatParams::default()).unwrap().dim(), 961);
        assert!(advection_problem(&AdvectionParams {
            nodes_per_axis: 2,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn advection_origin_is_free_equilibrium() {
        let p = small_advection();
        let zero = vec![0.0; p.dim()];
        let mut f = vec![1.0; p.dim()];
        p.drift(&zero, 0.0, &mut f);
        assert!(f.iter().all(|v| *v == 0.0));
        assert_eq!(p.running_cost(&zero, 0.0), 0.0);
        assert!((p.running_cost(&zero, -2.0) - 4e-5).abs() < 1e-18);
    }

    #[test]
    fn advection_row_sums() {
        let p = small_advection();
        let n = p.grid().n;
        for k in 0..p.dim() {
            let s = p.operator().row_sum(k);
            assert!(s <= 1e-12);
            let (i, j) = (k % n, k / n);
            if i > 0 && j > 0 {
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_operator_is_neumann_compatible_and_weighted_symmetric() {
        let p = small_heat();
        let d = p.dim();
        let ones = vec![1.0; d];
        let mut out = vec![0.0; d];
        p.operator().mul_vec(&ones, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-9));
        let w = p.symmetrizer().unwrap();
        let wa = p.operator().scale_rows(w);
        for r in 0..d {
            for (c, v) in wa.row(r) {
                assert!((v - wa.get(c, r)).abs() < 1e-9);
            }
        }
        // negative semidefinite in the W inner product: x^T W A x <= 0
        for seed in 0..5u64 {
            let x: Vec<f64> = (0..d).map(|i| ((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 500.0 - 1.0).collect();
            let mut ax = vec![0.0; d];
            wa.mul_vec(&x, &mut ax);
            assert!(x.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>() <= 1e-9);
        }
    }

    #[test]
    fn heat_equilibria() {
        let p = small_heat();
        let d = p.dim();
        let mut f = vec![0.0; d];
        p.drift(&vec![1.0; d], 0.0, &mut f);
        assert!(f.iter().all(|v| v.abs() < 1e-9));
        p.drift(&vec![0.0; d], 0.0, &mut f);
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn imex_step_contracts_linear_part() {
        let p = small_heat();
        let d = p.dim();
        let x = p.ic_class(0.8).unwrap();
        let dt = 0.1;
        let mut out = vec![0.0; d];
        p.step(&x, -1.0, dt, &mut out).unwrap();
        // pre-solve right-hand side
        let mut f = vec![0.0; d];
        p.nonlinearity(&x, &mut f);
        let Coupling::Affine(b) = p.coupling() else { unreachable!() };
        let rhs: Vec<f64> = (0..d).map(|i| x[i] + dt * (b[i] * -1.0 + f[i])).collect();
        let w = p.symmetrizer().unwrap();
        let wn = |v: &[f64]| v.iter().zip(w).map(|(a, wi)| wi * a * a).sum::<f64>().sqrt();
        assert!(wn(&out) <= wn(&rhs) + 1e-12);
    }

    #[test]
    fn implicit_advection_step_solves_system() {
        let p = small_advection();
        let x = p.ic_class(1.0).unwrap();
        let (dt, u) = (0.05, -1.0);
        let mut out = vec![0.0; p.dim()];
        p.step(&x, u, dt, &mut out).unwrap();
        let mut ax = vec![0.0; p.dim()];
        p.operator().mul_vec(&out, &mut ax);
        for i in 0..p.dim() {
            let lhs = out[i] - dt * (ax[i] + u * out[i]);
            assert!((lhs - x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_conditions() {
        let adv = small_advection();
        let heat = heat_problem(&HeatParams {
            nodes_per_axis: 11,
            ..Default::default()
        })
        .unwrap();
        assert!((sine_bump_at(0.75, 0.5, 0.5) - 0.75).abs() < 1e-15);
        assert_eq!(sine_bump_at(0.3, 0.0, 0.4), 0.0);
        assert_eq!(sine_bump_at(1.0, 2.5, 2.5), 0.0);
        let centre = 5 + 11 * 5;
        assert!((heat.ic_class(0.75).unwrap()[centre] - 0.75).abs() < 1e-12);
        assert!(adv.ic_class(0.0).is_err());
        assert!(adv.ic_class(1.5).is_err());
        assert_eq!(pyramid_at(0.5, 0.5), 1.0);
        assert_eq!(pyramid_at(0.0, 0.5), 0.0);
        assert_eq!(pyramid_at(0.0, 0.0), 0.0);
        assert_eq!(heat.pyramid_ic()[centre], 1.0);
    }
}
