//! Feedback synthesis from a stored value function and closed-loop
//! simulation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::mesh::ScatteredMesh;
use crate::par;
use crate::problems::{ControlProblem, Target};
use crate::interp::Interpolant;

/// Control picked at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackChoice {
    pub index: usize,
    pub control: f64,
    /// Every stepped point was outside coverage.
    pub fallback: bool,
}

/// `x -> argmin_u { dt g(x,u) + (1 - lambda dt) S[V](step(x,u,dt)) }`
pub struct FeedbackLaw<'a> {
    problem: &'a dyn ControlProblem,
    model: &'a dyn Interpolant,
    values: &'a [f64],
    dt: f64,
    controls: Vec<f64>,
    target: Option<Target>,
}

impl<'a> FeedbackLaw<'a> {
    /// Uses the problem's own control grid; see [`Self::with_controls`].
    pub fn new(
        problem: &'a dyn ControlProblem,
        model: &'a dyn Interpolant,
        values: &'a [f64],
        dt: f64,
    ) -> Result<Self> {
        if values.len() != model.node_count() {
            return Err(Error::input(format!(
                "{} values for a mesh of {} nodes",
                values.len(),
                model.node_count()
            )));
        }
        if model.dim() != problem.dim() {
            return Err(Error::input("mesh and problem dimensions differ"));
        }
        let lambda = problem.discount();
        if !(dt > 0.0) || dt * lambda >= 1.0 {
            return Err(Error::input(format!("need 0 < dt < 1/lambda, got dt = {dt}")));
        }
        Ok(Self {
            problem,
            model,
            values,
            dt,
            controls: problem.controls().to_vec(),
            target: problem.target().cloned(),
        })
    }

    /// A control grid independent of the one used for solving.
    pub fn with_controls(mut self, controls: Vec<f64>) -> Result<Self> {
        if controls.is_empty() || controls.iter().any(|u| !u.is_finite()) {
            return Err(Error::input("feedback control grid must be non-empty and finite"));
        }
        self.controls = controls;
        Ok(self)
    }

    /// Treats the target like any other region.
    pub fn without_target(mut self) -> Self {
        self.target = None;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn choose(&self, x: &[f64]) -> Result<FeedbackChoice> {
        if x.len() != self.problem.dim() {
            return Err(Error::input(format!(
                "state has dimension {}, problem has {}",
                x.len(),
                self.problem.dim()
            )));
        }
        let factor = 1.0 - self.dt * self.problem.discount();
        let mut y = vec![0.0; x.len()];
        let mut best = (f64::INFINITY, 0usize);
        let mut all_fallback = true;
        for (k, &u) in self.controls.iter().enumerate() {
            self.problem.step(x, u, self.dt, &mut y)?;
            let cont = if self.target.as_ref().is_some_and(|t| t.contains(&y)) {
                all_fallback = false;
                0.0
            } else {
                let s = self.model.eval_detailed(self.values, &y)?;
                all_fallback &= s.fallback;
                s.value
            };
            let q = self.dt * self.problem.running_cost(x, u) + factor * cont;
            if !q.is_finite() {
                return Err(Error::NonFinite { node: usize::MAX, control: k });
            }
            if q < best.0 {
                best = (q, k);
            }
        }
        Ok(FeedbackChoice {
            index: best.1,
            control: self.controls[best.1],
            fallback: all_fallback,
        })
    }
}

/// How controls are produced during a run.
pub enum Policy<'a> {
    Feedback(&'a FeedbackLaw<'a>),
    /// Open loop with a fixed control; `Constant(0.0)` is the uncontrolled run.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationOptions {
    /// Final time; `ln(100) / lambda` when absent, so `exp(-lambda T) <= 0.01`.
    pub horizon: Option<f64>,
    pub noise: Option<Noise>,
    /// Relative padding of the problem box beyond which a run is cut off.
    pub safety_margin: f64,
    /// Stop on target entry for problems that have one.
    pub stop_at_target: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            noise: None,
            safety_margin: 1.0,
            stop_at_target: true,
        }
    }
}

impl SimulationOptions {
    pub fn horizon(mut self, t: f64) -> Self {
        self.horizon = Some(t);
        self
    }

    pub fn noise(mut self, std: f64, seed: u64) -> Self {
        self.noise = Some(Noise { std, seed });
        self
    }

    pub fn resolved_horizon(&self, lambda: f64) -> f64 {
        self.horizon.unwrap_or(100f64.ln() / lambda)
    }
}

/// A closed- or open-loop run with `controls.len() == states.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub lambda: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    /// `running_cost[k]` is the discounted cost accrued before `t_k`.
    pub running_cost: Vec<f64>,
    pub arrival_time: Option<f64>,
    pub truncated: bool,
    pub fallback_steps: usize,
    pub noise_seed: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("a trajectory holds its initial state")
    }

    pub fn total_cost(&self) -> f64 {
        *self.running_cost.last().expect("non-empty running cost")
    }

    /// Writes `k,t,u,norm_inf,norm_2,running_cost` rows; the last row has
    /// an empty control.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "k,t,u,norm_inf,norm_2,running_cost")?;
        for (k, x) in self.states.iter().enumerate() {
            let inf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let two = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u = self.controls.get(k).map(|u| fmt_f64(*u)).unwrap_or_default();
            writeln!(
                w,
                "{k},{},{u},{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(inf),
                fmt_f64(two),
                fmt_f64(self.running_cost[k])
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the full state at step `k` as `index,value` rows.
    pub fn write_snapshot(&self, k: usize, path: &Path) -> Result<()> {
        let x = self
            .states
            .get(k)
            .ok_or_else(|| Error::input(format!("no step {k} in a run of {} steps", self.len())))?;
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "index,value")?;
        for (i, v) in x.iter().enumerate() {
            writeln!(w, "{i},{}", fmt_f64(*v))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `policy` from `x0` up to the horizon, rounded up to whole steps.
pub fn simulate(
    problem: &dyn ControlProblem,
    policy: &Policy<'_>,
    x0: &[f64],
    dt: f64,
    options: &SimulationOptions,
) -> Result<Trajectory> {
    if x0.len() != problem.dim() {
        return Err(Error::input(format!(
            "initial state has dimension {}, problem has {}",
            x0.len(),
            problem.dim()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::input("time step must be positive"));
    }
    if let Policy::Feedback(law) = policy {
        if law.dt() != dt {
            return Err(Error::input("feedback law and simulation use different time steps"));
        }
    }
    let lambda = problem.discount();
    let horizon = options.resolved_horizon(lambda);
    if !(horizon > 0.0) {
        return Err(Error::input("horizon must be positive"));
    }
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let mut noise = match options.noise {
        Some(n) => {
            let dist = Normal::new(0.0, n.std).map_err(|e| Error::input(format!("noise: {e}")))?;
            Some((dist, ChaCha8Rng::seed_from_u64(n.seed)))
        }
        None => None,
    };
    let perturb = |x: &mut [f64], noise: &mut Option<(Normal<f64>, ChaCha8Rng)>| {
        if let Some((dist, rng)) = noise {
            for v in x.iter_mut() {
                *v += dist.sample(rng);
            }
        }
    };
    let safety = problem.domain().inflate(options.safety_margin);
    let target = problem.target().filter(|_| options.stop_at_target);

    let mut x = x0.to_vec();
    perturb(&mut x, &mut noise);
    let mut traj = Trajectory {
        dt,
        lambda,
        times: vec![0.0],
        states: vec![x.clone()],
        controls: Vec::with_capacity(steps),
        running_cost: vec![0.0],
        arrival_time: None,
        truncated: false,
        fallback_steps: 0,
        noise_seed: options.noise.map(|n| n.seed),
    };
    if target.is_some_and(|t| t.contains(&x)) {
        traj.arrival_time = Some(0.0);
        return Ok(traj);
    }
    let mut next = vec![0.0; x.len()];
    let mut acc = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = match policy {
            Policy::Feedback(law) => {
                let c = law.choose(&x)?;
                traj.fallback_steps += c.fallback as usize;
                c.control
            }
            Policy::Constant(u) => *u,
        };
        problem.step(&x, u, dt, &mut next)?;
        perturb(&mut next, &mut noise);
        if !safety.contains(&next) || next.iter().any(|v| !v.is_finite()) {
            traj.truncated = true;
            break;
        }
        acc += dt * problem.running_cost(&x, u) * (-lambda * t).exp();
        std::mem::swap(&mut x, &mut next);
        traj.controls.push(u);
        traj.times.push((k + 1) as f64 * dt);
        traj.states.push(x.clone());
        traj.running_cost.push(acc);
        if target.is_some_and(|tg| tg.contains(&x)) {
            traj.arrival_time = Some((k + 1) as f64 * dt);
            break;
        }
    }
    Ok(traj)
}

/// Closed-loop run under `law`.
pub fn simulate_closed_loop(
    problem: &dyn ControlProblem,
    law: &FeedbackLaw<'_>,
    x0: &[f64],
    options: &SimulationOptions,
) -> Result<Trajectory> {
    simulate(problem, &Policy::Feedback(law), x0, law.dt(), options)
}

/// Independent runs in parallel, one per initial state and options entry.
pub fn simulate_batch(
    problem: &dyn ControlProblem,
    policy: &Policy<'_>,
    runs: &[(Vec<f64>, SimulationOptions)],
    dt: f64,
) -> Vec<Result<Trajectory>> {
    par::map_slice(runs, |(x0, opts)| simulate(problem, policy, x0, dt, opts))
}

/// `sum_k dt g(y_k, u_k) exp(-lambda t_k)`
pub fn evaluate_cost(problem: &dyn ControlProblem, traj: &Trajectory) -> Result<f64> {
    let lambda = problem.discount();
    let mut total = 0.0;
    for (k, &u) in traj.controls.iter().enumerate() {
        let x = &traj.states[k];
        if x.len() != problem.dim() {
            return Err(Error::input("trajectory and problem dimensions differ"));
        }
        total += traj.dt * problem.running_cost(x, u) * (-lambda * traj.times[k]).exp();
    }
    Ok(total)
}

/// `|V - V*|_inf / |V*|_inf`
pub fn relative_error(values: &[f64], exact: &[f64]) -> Result<f64> {
    if values.len() != exact.len() {
        return Err(Error::input(format!("{} values against {} exact values", values.len(), exact.len())));
    }
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::UndefinedMetric(format!("exact sup-norm is {scale}")));
    }
    let err = values
        .iter()
        .zip(exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(err / scale)
}

/// Exact values at every node.
pub fn exact_on_mesh(problem: &dyn ControlProblem, mesh: &ScatteredMesh) -> Result<Vec<f64>> {
    mesh.points()
        .map(|x| problem.exact_value(x))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Unsupported(format!("{} has no exact value function", problem.name())))
}
