//! Shape-parameter selection by minimising the Bellman residual
//! `R(theta) = |V - W(V)|_inf` over `sigma = theta / q_X`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::relative_error;
use crate::io::fmt_f64;
use crate::mesh::ScatteredMesh;
use crate::par;
use crate::problems::ControlProblem;
use crate::solver::{solve_with, SolverConfig, Transitions, ValueFunction};

/// Comparison grid `theta_min, theta_min + step, ..., theta_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterRange {
    pub theta_min: f64,
    pub theta_max: f64,
    pub step: f64,
}

impl ParameterRange {
    pub fn new(theta_min: f64, theta_max: f64, step: f64) -> Result<Self> {
        let r = Self {
            theta_min,
            theta_max,
            step,
        };
        r.validate()?;
        Ok(r)
    }

    /// A one-point range.
    pub fn single(theta: f64) -> Self {
        Self {
            theta_min: theta,
            theta_max: theta,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min > 0.0) || !(self.theta_max >= self.theta_min) || !self.theta_max.is_finite() {
            return Err(Error::input(format!(
                "need 0 < theta_min <= theta_max, got [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::input("theta grid step must be positive"));
        }
        Ok(())
    }

    /// Grid points; the count is rounded so `theta_max` is hit despite
    /// floating-point drift.
    pub fn grid(&self) -> Vec<f64> {
        let span = self.theta_max - self.theta_min;
        let n = (span / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let t = self.theta_min + i as f64 * self.step;
                // snap to a short decimal so 1.7 prints as 1.7
                let snapped = (t * 1e9).round() / 1e9;
                snapped.min(self.theta_max)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TunerMode {
    Comparison,
    Gradient,
    Fixed,
}

/// Options of the projected finite-difference descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientOptions {
    /// Starting point; the midpoint of the range when absent.
    pub theta0: Option<f64>,
    pub eps: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            theta0: None,
            eps: 1e-6,
            tolerance: 1e-4,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub theta: f64,
    /// `None` when the solve failed.
    pub residual: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProfile {
    pub mode: TunerMode,
    pub entries: Vec<ProfileEntry>,
    pub selected: f64,
    /// Gradient mode stopped on the iteration cap.
    #[serde(default)]
    pub hit_cap: bool,
    /// Gradient mode revisited an earlier iterate.
    #[serde(default)]
    pub oscillated: bool,
}

impl ResidualProfile {
    /// Writes `theta,residual,iterations,seconds,status` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "theta,residual,iterations,seconds,status")?;
        for e in &self.entries {
            let status = match (&e.residual, e.converged) {
                (None, _) => "failed",
                (Some(_), true) => "ok",
                (Some(_), false) => "not-converged",
            };
            writeln!(
                w,
                "{},{},{},{},{status}",
                fmt_f64(e.theta),
                e.residual.map(fmt_f64).unwrap_or_default(),
                e.iterations,
                fmt_f64(e.seconds)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TunerOutcome {
    pub theta: f64,
    pub profile: ResidualProfile,
    pub value: ValueFunction,
}

/// Shared state for solving at many `theta` on one mesh.
pub struct ThetaSolver<'a> {
    problem: &'a dyn ControlProblem,
    config: &'a SolverConfig,
    q: f64,
    transitions: Transitions,
}

impl<'a> ThetaSolver<'a> {
    /// Gathers neighbours once for every `theta >= theta_min`.
    pub fn new(
        problem: &'a dyn ControlProblem,
        mesh: &ScatteredMesh,
        config: &'a SolverConfig,
        theta_min: f64,
    ) -> Result<Self> {
        let q = mesh.separation();
        if !q.is_finite() {
            return Err(Error::input("shape tuning needs at least two mesh nodes"));
        }
        if !(theta_min > 0.0) {
            return Err(Error::input("theta must be positive"));
        }
        let transitions = Transitions::build(problem, mesh, config, q / theta_min)?;
        Ok(Self {
            problem,
            config,
            q,
            transitions,
        })
    }

    pub fn separation(&self) -> f64 {
        self.q
    }

    pub fn solve(&self, theta: f64, warm: Option<&[f64]>) -> Result<ValueFunction> {
        let op = self.transitions.operator(theta / self.q)?;
        let mut vf = solve_with(&op, self.config, self.problem.discount(), warm)?;
        vf.meta.theta = Some(theta);
        Ok(vf)
    }

    fn entry(&self, theta: f64, warm: Option<&[f64]>) -> (ProfileEntry, Option<ValueFunction>) {
        let start = Instant::now();
        match self.solve(theta, warm) {
            Ok(vf) => (
                ProfileEntry {
                    theta,
                    residual: Some(vf.meta.residual),
                    iterations: vf.meta.iterations,
                    seconds: start.elapsed().as_secs_f64(),
                    converged: vf.meta.converged,
                    error: None,
                },
                Some(vf),
            ),
            Err(e) => (
                ProfileEntry {
                    theta,
                    residual: None,
                    iterations: 0,
                    seconds: start.elapsed().as_secs_f64(),
                    converged: false,
                    error: Some(e.to_string()),
                },
                None,
            ),
        }
    }
}

/// Index of the smallest residual; ties go to the smaller `theta`.
fn argmin_residual(entries: &[ProfileEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        let Some(r) = e.residual else { continue };
        match best {
            None => best = Some(i),
            Some(b) => {
                let rb = entries[b].residual.unwrap();
                if r < rb || (r == rb && e.theta < entries[b].theta) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Solves at every grid `theta` and keeps the smallest residual.
pub fn select_theta_comparison(
    problem: &dyn ControlProblem,
    mesh: &ScatteredMesh,
    range: &ParameterRange,
    config: &SolverConfig,
    warm_start: bool,
) -> Result<TunerOutcome> {
    range.validate()?;
    let solver = ThetaSolver::new(problem, mesh, config, range.theta_min)?;
    comparison_with(&solver, &range.grid(), warm_start)
}

pub fn comparison_with(solver: &ThetaSolver<'_>, thetas: &[f64], warm_start: bool) -> Result<TunerOutcome> {
    if thetas.is_empty() {
        return Err(Error::input("theta grid is empty"));
    }
    let results: Vec<(ProfileEntry, Option<ValueFunction>)> = if warm_start {
        let mut out = Vec::with_capacity(thetas.len());
        let mut prev: Option<Vec<f64>> = None;
        for &t in thetas {
            let (e, vf) = solver.entry(t, prev.as_deref());
            if let Some(vf) = &vf {
                prev = Some(vf.values.clone());
            }
            out.push((e, vf));
        }
        out
    } else {
        par::map_slice(thetas, |&t| solver.entry(t, None))
    };
    let entries: Vec<ProfileEntry> = results.iter().map(|r| r.0.clone()).collect();
    let best = argmin_residual(&entries).ok_or(Error::TunerExhausted)?;
    let value = results.into_iter().nth(best).and_then(|r| r.1).expect("selected entry has a value");
    let theta = entries[best].theta;
    Ok(TunerOutcome {
        theta,
        profile: ResidualProfile {
            mode: TunerMode::Comparison,
            entries,
            selected: theta,
            hit_cap: false,
            oscillated: false,
        },
        value,
    })
}

/// Projected descent `theta <- clamp(theta - R_theta)` with the forward
/// difference `R_theta = (R(theta + eps) - R(theta)) / eps`.
pub fn select_theta_gradient(
    problem: &dyn ControlProblem,
    mesh: &ScatteredMesh,
    range: &ParameterRange,
    config: &SolverConfig,
    options: &GradientOptions,
) -> Result<TunerOutcome> {
    range.validate()?;
    let solver = ThetaSolver::new(problem, mesh, config, range.theta_min)?;
    gradient_with(&solver, range, options)
}

pub fn gradient_with(solver: &ThetaSolver<'_>, range: &ParameterRange, options: &GradientOptions) -> Result<TunerOutcome> {
    if !(options.eps > 0.0) || !(options.tolerance > 0.0) || options.max_iter == 0 {
        return Err(Error::input("gradient tuner needs eps > 0, tolerance > 0 and max_iter >= 1"));
    }
    let theta0 = options
        .theta0
        .unwrap_or(0.5 * (range.theta_min + range.theta_max));
    if !(range.theta_min..=range.theta_max).contains(&theta0) {
        return Err(Error::input(format!("theta0 = {theta0} is outside the range")));
    }
    let mut entries = Vec::new();
    let mut visited: Vec<f64> = Vec::new();
    // (theta, residual, value) of every iterate
    let mut iterates: Vec<(f64, f64, ValueFunction)> = Vec::new();
    let mut theta = theta0;
    let (mut hit_cap, mut oscillated) = (true, false);
    for _ in 0..options.max_iter {
        let (e0, v0) = solver.entry(theta, None);
        let (e1, _) = solver.entry(theta + options.eps, None);
        entries.push(e0.clone());
        entries.push(e1.clone());
        let (Some(r0), Some(r1), Some(v0)) = (e0.residual, e1.residual, v0) else {
            break;
        };
        iterates.push((theta, r0, v0));
        visited.push(theta);
        let grad = (r1 - r0) / options.eps;
        if grad.abs() < options.tolerance {
            hit_cap = false;
            break;
        }
        let next = (theta - grad).clamp(range.theta_min, range.theta_max);
        if visited.iter().any(|v| (v - next).abs() <= 1e-12) {
            oscillated = next != theta;
            hit_cap = false;
            if next == theta {
                // projected step cannot move: a boundary stationary point
                break;
            }
            break;
        }
        theta = next;
    }
    if iterates.is_empty() {
        return Err(Error::TunerExhausted);
    }
    let pick = if hit_cap || oscillated {
        // best iterate so far, smaller theta on ties
        let mut b = 0;
        for (i, it) in iterates.iter().enumerate() {
            if it.1 < iterates[b].1 || (it.1 == iterates[b].1 && it.0 < iterates[b].0) {
                b = i;
            }
        }
        b
    } else {
        iterates.len() - 1
    };
    let (theta, _, value) = iterates.swap_remove(pick);
    Ok(TunerOutcome {
        theta,
        profile: ResidualProfile {
            mode: TunerMode::Gradient,
            entries,
            selected: theta,
            hit_cap,
            oscillated,
        },
        value,
    })
}

/// One level of the coarse-to-fine sweep: a window of half-width
/// `half_width` around the previous optimum, sampled every `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineLevel {
    pub half_width: f64,
    pub step: f64,
}

/// Comparison over `range`, then over successively narrower windows
/// centred on the current optimum and clipped to `range`.
pub fn select_theta_refined(
    problem: &dyn ControlProblem,
    mesh: &ScatteredMesh,
    range: &ParameterRange,
    levels: &[RefineLevel],
    config: &SolverConfig,
) -> Result<TunerOutcome> {
    range.validate()?;
    let solver = ThetaSolver::new(problem, mesh, config, range.theta_min)?;
    let mut out = comparison_with(&solver, &range.grid(), false)?;
    for level in levels {
        let window = ParameterRange::new(
            (out.theta - level.half_width).max(range.theta_min),
            (out.theta + level.half_width).min(range.theta_max),
            level.step,
        )?;
        let next = comparison_with(&solver, &window.grid(), false)?;
        let mut entries = out.profile.entries;
        entries.extend(next.profile.entries);
        entries.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        entries.dedup_by(|a, b| a.theta == b.theta);
        let best = argmin_residual(&entries).ok_or(Error::TunerExhausted)?;
        let keep_old = entries[best].theta == out.theta;
        out = TunerOutcome {
            theta: entries[best].theta,
            profile: ResidualProfile {
                mode: TunerMode::Comparison,
                selected: entries[best].theta,
                entries,
                hit_cap: false,
                oscillated: false,
            },
            value: if keep_old { out.value } else { next.value },
        };
        if out.value.meta.theta != Some(out.theta) {
            out.value = solver.solve(out.theta, None)?;
        }
    }
    Ok(out)
}

/// `theta* = argmin E(V_theta)` over the grid; an evaluation aid that needs
/// the exact value function.
pub fn oracle_theta(
    problem: &dyn ControlProblem,
    mesh: &ScatteredMesh,
    range: &ParameterRange,
    config: &SolverConfig,
) -> Result<(f64, f64)> {
    range.validate()?;
    let exact: Vec<f64> = mesh
        .points()
        .map(|x| problem.exact_value(x))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Unsupported(format!("{} has no exact value function", problem.name())))?;
    let solver = ThetaSolver::new(problem, mesh, config, range.theta_min)?;
    oracle_with(&solver, &range.grid(), &exact)
}

pub fn oracle_with(solver: &ThetaSolver<'_>, thetas: &[f64], exact: &[f64]) -> Result<(f64, f64)> {
    let errs: Vec<Result<f64>> = par::map_slice(thetas, |&t| {
        let vf = solver.solve(t, None)?;
        relative_error(&vf.values, exact)
    });
    let mut best: Option<(f64, f64)> = None;
    for (&t, e) in thetas.iter().zip(errs) {
        let e = e?;
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((t, e));
        }
    }
    best.ok_or_else(|| Error::input("theta grid is empty"))
}
