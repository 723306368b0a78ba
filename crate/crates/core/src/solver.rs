//! Fully discrete Bellman operator and value iteration.
//!
//! For node `x_j` the update is
//! `V'_j = min_u [dt g(x_j,u) + (1 - dt lambda) S[V](y_j(u))]`
//! where `y_j(u)` is one step of the problem's time stepper from `x_j`.
//! The stepped points never change between sweeps, so their neighbour lists
//! are gathered once into a [`Transitions`] table. Turning that table into
//! Shepard weights for a given `sigma` makes every sweep a sparse
//! matrix-vector product followed by a row-wise minimum.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::kernel::WendlandKernel;
use crate::mesh::ScatteredMesh;
use crate::par;
use crate::problems::ControlProblem;
use crate::shepard::{normalized_weights, ShepardModel};

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-6;

fn default_tolerance() -> f64 {
    DEFAULT_VI_TOLERANCE
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(default = "default_tolerance")]
    pub vi_tolerance: f64,
    /// Defaults to `10 ceil(1 / (dt lambda))`.
    #[serde(default)]
    pub max_sweeps: Option<usize>,
    /// Overrides the problem's control samples.
    #[serde(default)]
    pub controls: Option<Vec<f64>>,
    /// Holds the value at zero on the target set, both at nodes inside it and
    /// for stepped points that land in it.
    #[serde(default = "default_true")]
    pub pin_target: bool,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            vi_tolerance: DEFAULT_VI_TOLERANCE,
            max_sweeps: None,
            controls: None,
            pin_target: true,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.vi_tolerance = tol;
        self
    }

    pub fn with_max_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = Some(sweeps);
        self
    }

    pub fn with_controls(mut self, controls: Vec<f64>) -> Self {
        self.controls = Some(controls);
        self
    }

    pub fn validate(&self, problem: &dyn ControlProblem) -> Result<()> {
        let lambda = problem.discount();
        if !(self.dt > 0.0) || self.dt * lambda > 1.0 + 1e-12 {
            return Err(Error::input(format!(
                "time step {} outside (0, 1/lambda] for lambda = {lambda}",
                self.dt
            )));
        }
        if !(self.vi_tolerance > 0.0) {
            return Err(Error::input("value iteration tolerance must be positive"));
        }
        if self.max_sweeps == Some(0) {
            return Err(Error::input("max_sweeps must be at least 1"));
        }
        if self.controls.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::input("control set must be non-empty"));
        }
        Ok(())
    }

    pub fn sweep_cap(&self, lambda: f64) -> usize {
        self.max_sweeps
            .unwrap_or_else(|| 10 * (1.0 / (self.dt * lambda)).ceil() as usize)
    }

    pub fn controls<'a>(&'a self, problem: &'a dyn ControlProblem) -> &'a [f64] {
        self.controls.as_deref().unwrap_or(problem.controls())
    }
}

/// Stepped points of every (node, control) pair with their nearby nodes.
#[derive(Debug, Clone)]
pub struct Transitions {
    n: usize,
    m: usize,
    radius: f64,
    discount: f64,
    dt: f64,
    /// `dt g(x_j, u_k)` at `j * m + k`.
    cost: Vec<f64>,
    /// Stepped point lies in the pinned target.
    into_target: Vec<bool>,
    pinned: Vec<bool>,
    offsets: Vec<usize>,
    nb_idx: Vec<u32>,
    nb_dist: Vec<f64>,
    /// Nearest node, used only when no node lies within `radius`.
    far_nearest: Vec<u32>,
}

struct NodeRows {
    cost: Vec<f64>,
    into_target: Vec<bool>,
    lists: Vec<Vec<(usize, f64)>>,
    far: Vec<u32>,
}

impl Transitions {
    /// Gathers neighbours within `radius` of every stepped point. Any
    /// `sigma >= 1 / radius` can then be served without new searches.
    pub fn build(
        problem: &dyn ControlProblem,
        mesh: &ScatteredMesh,
        config: &SolverConfig,
        radius: f64,
    ) -> Result<Self> {
        config.validate(problem)?;
        if mesh.dim() != problem.dim() {
            return Err(Error::input(format!(
                "mesh dimension {} does not match problem dimension {}",
                mesh.dim(),
                problem.dim()
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::input(format!("search radius must be positive and finite, got {radius}")));
        }
        let controls = config.controls(problem);
        let (n, m, d) = (mesh.len(), controls.len(), mesh.dim());
        let target = problem.target().filter(|_| config.pin_target);
        let index = mesh.range_index(radius);
        let pinned: Vec<bool> = (0..n)
            .map(|j| target.is_some_and(|t| t.contains(mesh.point(j))))
            .collect();

        let rows: Vec<Result<NodeRows>> = par::map_range(n, |j| {
            let x = mesh.point(j);
            let mut y = vec![0.0; d];
            let mut rows = NodeRows {
                cost: Vec::with_capacity(m),
                into_target: Vec::with_capacity(m),
                lists: Vec::with_capacity(m),
                far: Vec::with_capacity(m),
            };
            for (k, &u) in controls.iter().enumerate() {
                let c = config.dt * problem.running_cost(x, u);
                if !c.is_finite() {
                    return Err(Error::NonFinite { node: j, control: k });
                }
                rows.cost.push(c);
                if pinned[j] {
                    rows.into_target.push(true);
                    rows.lists.push(Vec::new());
                    rows.far.push(0);
                    continue;
                }
                problem.step(x, u, config.dt, &mut y)?;
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { node: j, control: k });
                }
                if target.is_some_and(|t| t.contains(&y)) {
                    rows.into_target.push(true);
                    rows.lists.push(Vec::new());
                    rows.far.push(0);
                    continue;
                }
                let mut list = Vec::new();
                index.query(mesh.coords(), &y, radius, &mut list);
                // fixed summation order regardless of how the index was built
                list.sort_unstable_by_key(|p| p.0);
                let far = if list.is_empty() {
                    mesh.nearest(&y)?.0 as u32
                } else {
                    0
                };
                rows.into_target.push(false);
                rows.lists.push(list);
                rows.far.push(far);
            }
            Ok(rows)
        });

        let mut t = Transitions {
            n,
            m,
            radius,
            discount: 1.0 - config.dt * problem.discount(),
            dt: config.dt,
            cost: Vec::with_capacity(n * m),
            into_target: Vec::with_capacity(n * m),
            pinned,
            offsets: Vec::with_capacity(n * m + 1),
            nb_idx: Vec::new(),
            nb_dist: Vec::new(),
            far_nearest: Vec::with_capacity(n * m),
        };
        t.offsets.push(0);
        for r in rows {
            let r = r?;
            t.cost.extend(r.cost);
            t.into_target.extend(r.into_target);
            t.far_nearest.extend(r.far);
            for list in r.lists {
                for (i, dist) in list {
                    t.nb_idx.push(i as u32);
                    t.nb_dist.push(dist);
                }
                t.offsets.push(t.nb_idx.len());
            }
        }
        Ok(t)
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn controls(&self) -> usize {
        self.m
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `1 - dt lambda`.
    pub fn discount_factor(&self) -> f64 {
        self.discount
    }

    /// Shepard weights for shape parameter `sigma`.
    pub fn operator(&self, sigma: f64) -> Result<BellmanOperator> {
        let kernel = WendlandKernel::new(sigma)?;
        let support = 1.0 / sigma;
        if support > self.radius * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "support radius {support} exceeds the gathered radius {}",
                self.radius
            )));
        }
        let rows: Vec<(Vec<(usize, f64)>, bool)> = par::map_range(self.n * self.m, |r| {
            if self.into_target[r] {
                return (Vec::new(), false);
            }
            let span = self.offsets[r]..self.offsets[r + 1];
            let list: Vec<(usize, f64)> = self.nb_idx[span.clone()]
                .iter()
                .zip(&self.nb_dist[span])
                .map(|(&i, &dist)| (i as usize, dist))
                .collect();
            match normalized_weights(&kernel, &list) {
                Some(w) => (w, false),
                None => {
                    let near = list
                        .iter()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .map_or(self.far_nearest[r] as usize, |p| p.0);
                    (vec![(near, 1.0)], true)
                }
            }
        });
        let mut op = BellmanOperator {
            n: self.n,
            m: self.m,
            sigma,
            discount: self.discount,
            cost: self.cost.clone(),
            pinned: self.pinned.clone(),
            offsets: Vec::with_capacity(rows.len() + 1),
            idx: Vec::new(),
            w: Vec::new(),
            fallback_count: 0,
        };
        op.offsets.push(0);
        for (row, fell_back) in rows {
            op.fallback_count += fell_back as usize;
            for (i, w) in row {
                op.idx.push(i as u32);
                op.w.push(w);
            }
            op.offsets.push(op.idx.len());
        }
        Ok(op)
    }
}

/// The operator `W_sigma` with weights frozen for one shape parameter.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    n: usize,
    m: usize,
    sigma: f64,
    discount: f64,
    cost: Vec<f64>,
    pinned: Vec<bool>,
    offsets: Vec<usize>,
    idx: Vec<u32>,
    w: Vec<f64>,
    fallback_count: usize,
}

impl BellmanOperator {
    pub fn new(problem: &dyn ControlProblem, model: &ShepardModel<'_>, config: &SolverConfig) -> Result<Self> {
        let support = 1.0 / model.sigma();
        Transitions::build(problem, model.mesh(), config, support)?.operator(model.sigma())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Number of (node, control) pairs whose stepped point fell outside
    /// coverage and used the nearest node.
    pub fn fallback_count(&self) -> usize {
        self.fallback_count
    }

    fn continuation(&self, r: usize, v: &[f64]) -> f64 {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.idx[span.clone()]
            .iter()
            .zip(&self.w[span])
            .map(|(&i, &w)| w * v[i as usize])
            .sum()
    }

    /// Value and minimising control index at node `j`.
    fn node_min(&self, j: usize, v: &[f64]) -> Result<(f64, usize)> {
        if self.pinned[j] {
            return Ok((0.0, 0));
        }
        let mut best = (f64::INFINITY, 0);
        for k in 0..self.m {
            let r = j * self.m + k;
            let q = self.cost[r] + self.discount * self.continuation(r, v);
            if !q.is_finite() {
                return Err(Error::NonFinite { node: j, control: k });
            }
            if q < best.0 {
                best = (q, k);
            }
        }
        Ok(best)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::input(format!("{} values for {} nodes", v.len(), self.n)));
        }
        Ok(())
    }

    /// One application of `W_sigma`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        par::map_range(self.n, |j| self.node_min(j, v).map(|p| p.0))
            .into_iter()
            .collect()
    }

    /// Index of the minimising control at every node.
    pub fn policy(&self, v: &[f64]) -> Result<Vec<usize>> {
        self.check_len(v)?;
        par::map_range(self.n, |j| self.node_min(j, v).map(|p| p.1))
            .into_iter()
            .collect()
    }

    /// `|V - W(V)|_inf`
    pub fn residual(&self, v: &[f64]) -> Result<f64> {
        let wv = self.apply(v)?;
        Ok(sup_diff(v, &wv))
    }

    /// Iterates `V <- W(V)` from `v0` (zero when `None`) until the sweep
    /// change drops below `tolerance` or `max_sweeps` is spent.
    pub fn iterate(&self, v0: Option<&[f64]>, tolerance: f64, max_sweeps: usize) -> Result<ValueFunction> {
        let start = Instant::now();
        let mut v = match v0 {
            Some(v0) => {
                self.check_len(v0)?;
                v0.to_vec()
            }
            None => vec![0.0; self.n],
        };
        let mut delta = f64::INFINITY;
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < max_sweeps {
            let next = self.apply(&v)?;
            delta = sup_diff(&v, &next);
            v = next;
            sweeps += 1;
            if delta < tolerance {
                converged = true;
                break;
            }
        }
        let residual = self.residual(&v)?;
        Ok(ValueFunction {
            values: v,
            meta: SolveMeta {
                iterations: sweeps,
                final_delta: delta,
                dt: 0.0,
                sigma: self.sigma,
                theta: None,
                fallback_count: self.fallback_count,
                converged,
                residual,
                seconds: start.elapsed().as_secs_f64(),
            },
        })
    }
}

/// `max_i |a_i - b_i|`
pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    par::max_over(a.len(), |i| (a[i] - b[i]).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub iterations: usize,
    /// `|V^{k+1} - V^k|_inf` of the last sweep.
    pub final_delta: f64,
    pub dt: f64,
    pub sigma: f64,
    pub theta: Option<f64>,
    pub fallback_count: usize,
    pub converged: bool,
    /// `|V - W(V)|_inf` at the returned values.
    pub residual: f64,
    pub seconds: f64,
}

/// Nodal values plus how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub meta: SolveMeta,
}

/// `W_sigma(V)` for the model's mesh and shape parameter.
pub fn bellman_update(
    problem: &dyn ControlProblem,
    model: &ShepardModel<'_>,
    v: &[f64],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    BellmanOperator::new(problem, model, config)?.apply(v)
}

/// Value iteration from `v0`, or from zero.
pub fn value_iteration(
    problem: &dyn ControlProblem,
    model: &ShepardModel<'_>,
    config: &SolverConfig,
    v0: Option<&[f64]>,
) -> Result<ValueFunction> {
    let op = BellmanOperator::new(problem, model, config)?;
    solve_with(&op, config, problem.discount(), v0)
}

pub(crate) fn solve_with(
    op: &BellmanOperator,
    config: &SolverConfig,
    lambda: f64,
    v0: Option<&[f64]>,
) -> Result<ValueFunction> {
    let mut vf = op.iterate(v0, config.vi_tolerance, config.sweep_cap(lambda))?;
    vf.meta.dt = config.dt;
    Ok(vf)
}

/// `R(sigma) = |V - W_sigma(V)|_inf`
pub fn residual(
    problem: &dyn ControlProblem,
    model: &ShepardModel<'_>,
    v: &[f64],
    config: &SolverConfig,
) -> Result<f64> {
    BellmanOperator::new(problem, model, config)?.residual(v)
}

/// Writes `node,x0,...,value` rows and a JSON sidecar with the metadata.
pub fn write_value_function(
    vf: &ValueFunction,
    mesh: &ScatteredMesh,
    csv_path: &Path,
    config_hash: Option<&str>,
) -> Result<()> {
    if vf.values.len() != mesh.len() {
        return Err(Error::input("value function and mesh sizes differ"));
    }
    let mut w = BufWriter::new(fs::File::create(csv_path)?);
    let mut header = vec!["node".to_string()];
    header.extend((0..mesh.dim()).map(|a| format!("x{a}")));
    header.push("value".into());
    writeln!(w, "{}", header.join(","))?;
    for (j, v) in vf.values.iter().enumerate() {
        let mut row = vec![j.to_string()];
        row.extend(mesh.point(j).iter().map(|c| fmt_f64(*c)));
        row.push(fmt_f64(*v));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let side = ValueSidecar {
        meta: vf.meta.clone(),
        config_hash: config_hash.map(str::to_owned),
    };
    fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueSidecar {
    #[serde(flatten)]
    pub meta: SolveMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Reads a value-function CSV back as (mesh, value function).
pub fn read_value_function(csv_path: &Path) -> Result<(ScatteredMesh, ValueFunction)> {
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty value-function file".into()))?
        .split(',')
        .collect();
    if header.len() < 3 || header[0] != "node" || header[header.len() - 1] != "value" {
        return Err(Error::Parse("value-function header must be node,x0,...,value".into()));
    }
    let dim = header.len() - 2;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::Parse(format!("row {} has {} columns", row + 1, fields.len())));
        }
        if fields[0].trim().parse::<usize>().ok() != Some(row) {
            return Err(Error::Parse(format!("row {} has node index {:?}", row + 1, fields[0])));
        }
        for f in &fields[1..=dim] {
            coords.push(parse_f64(f)?);
        }
        values.push(parse_f64(fields[dim + 1])?);
    }
    let mesh = ScatteredMesh::from_flat(dim, coords)?;
    let side: ValueSidecar = serde_json::from_str(&fs::read_to_string(csv_path.with_extension("json"))?)?;
    Ok((mesh, ValueFunction { values, meta: side.meta }))
}
