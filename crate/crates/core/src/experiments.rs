//! End-to-end pipelines: mesh, tune, solve, simulate. These back the CLI
//! tables and the acceptance suite.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{evaluate_cost, relative_error, exact_on_mesh, FeedbackLaw, Noise, Policy, SimulationOptions, Trajectory};
use crate::interp::{value_iteration_with, GridInterpolant, Interpolant};
use crate::mesh::{
    estimate_trajectory_fill, generate_random_clustered, generate_uniform_grid, BoxDomain, DynamicsMeshOptions,
    MeshRecipe, ScatteredMesh, SeedStates,
};
use crate::problems::{
    advection_problem, control_grid, heat_problem, AdvectionParams, ControlProblem, Eikonal, HeatParams,
    SemiDiscretePde, StateSpec, DEFAULT_TARGET_RADIUS,
};
use crate::shepard::ShepardModel;
use crate::solver::{SolverConfig, ValueFunction};
use crate::tuner::{
    comparison_with, gradient_with, oracle_with, GradientOptions, ParameterRange, ResidualProfile, ThetaSolver,
    TunerMode, TunerOutcome,
};

/// How the shape parameter is picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TunerChoice {
    Comparison {
        #[serde(default)]
        warm_start: bool,
    },
    Gradient {
        #[serde(default)]
        options: GradientOptions,
    },
    Fixed {
        theta: f64,
    },
}

impl Default for TunerChoice {
    fn default() -> Self {
        TunerChoice::Comparison { warm_start: false }
    }
}

/// Runs the chosen tuner on a prepared solver.
pub fn tune(solver: &ThetaSolver<'_>, range: &ParameterRange, choice: &TunerChoice) -> Result<TunerOutcome> {
    match choice {
        TunerChoice::Comparison { warm_start } => comparison_with(solver, &range.grid(), *warm_start),
        TunerChoice::Gradient { options } => gradient_with(solver, range, options),
        TunerChoice::Fixed { theta } => {
            let mut out = comparison_with(solver, &[*theta], false)?;
            out.profile.mode = TunerMode::Fixed;
            Ok(out)
        }
    }
}

fn lower_theta(range: &ParameterRange, choice: &TunerChoice) -> f64 {
    match choice {
        TunerChoice::Fixed { theta } => *theta,
        _ => range.theta_min,
    }
}

/// Scalar summary of one Eikonal run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub nodes: usize,
    pub fill: f64,
    pub separation: f64,
    pub dt: f64,
    pub theta_bar: f64,
    pub error_bar: f64,
    pub theta_star: Option<f64>,
    pub error_star: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub clamped: usize,
    pub seconds: f64,
}

/// A run with its artifacts.
#[derive(Debug)]
pub struct EikonalRun {
    pub record: RunRecord,
    pub mesh: ScatteredMesh,
    pub value: ValueFunction,
    pub profile: ResidualProfile,
}

/// Random k-means mesh runs; `dt` is the estimated fill distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMeshSpec {
    pub nodes: usize,
    pub pool_size: usize,
    pub kmeans_iters: usize,
    pub range: ParameterRange,
    pub tuner: TunerChoice,
    pub fill_samples: usize,
    pub oracle: bool,
    pub target_radius: f64,
}

impl Default for RandomMeshSpec {
    fn default() -> Self {
        Self {
            nodes: 200,
            pool_size: 40_000,
            kmeans_iters: 100,
            range: ParameterRange {
                theta_min: 1.0,
                theta_max: 3.0,
                step: 0.1,
            },
            tuner: TunerChoice::default(),
            fill_samples: 20_000,
            oracle: true,
            target_radius: DEFAULT_TARGET_RADIUS,
        }
    }
}

/// Dynamics-driven mesh runs from `seeds` uniform states under `controls`
/// equispaced headings; `dt` is the fill distance of the trajectory set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsMeshSpec {
    pub mesh_dt: f64,
    pub seeds: usize,
    pub controls: usize,
    pub steps: usize,
    pub range: ParameterRange,
    pub tuner: TunerChoice,
    pub fill_samples: usize,
    pub oracle: bool,
    pub target_radius: f64,
}

impl Default for DynamicsMeshSpec {
    fn default() -> Self {
        Self {
            mesh_dt: 0.05,
            seeds: 8,
            controls: 16,
            steps: 8,
            range: ParameterRange {
                theta_min: 1.0,
                theta_max: 3.0,
                step: 0.1,
            },
            tuner: TunerChoice::default(),
            fill_samples: 20_000,
            oracle: true,
            target_radius: DEFAULT_TARGET_RADIUS,
        }
    }
}

impl DynamicsMeshSpec {
    /// The three reference recipes, coarse to fine.
    pub fn reference(level: usize) -> Result<Self> {
        let (mesh_dt, seeds, steps) = match level {
            0 => (0.1, 4, 5),
            1 => (0.05, 8, 8),
            2 => (0.025, 16, 15),
            _ => return Err(Error::input(format!("no reference recipe {level}"))),
        };
        Ok(Self {
            mesh_dt,
            seeds,
            steps,
            ..Self::default()
        })
    }

    pub fn recipe(&self, seed: u64) -> MeshRecipe {
        MeshRecipe::DynamicsDriven {
            seeds: SeedStates::Uniform { count: self.seeds },
            controls: Eikonal::new(self.controls, self.target_radius).controls().to_vec(),
            dt: self.mesh_dt,
            steps: self.steps,
            seed,
            options: DynamicsMeshOptions::default(),
        }
    }
}

fn eikonal_pipeline(
    problem: &Eikonal,
    mut mesh: ScatteredMesh,
    fill: (f64, usize),
    seed: u64,
    range: &ParameterRange,
    tuner: &TunerChoice,
    oracle: bool,
    start: Instant,
) -> Result<EikonalRun> {
    let (fill, fill_samples) = fill;
    let dt = fill.min(0.5);
    let config = SolverConfig::new(dt);
    let exact = exact_on_mesh(problem, &mesh)?;
    let solver = ThetaSolver::new(problem, &mesh, &config, lower_theta(range, tuner))?;
    let out = tune(&solver, range, tuner)?;
    let error_bar = relative_error(&out.value.values, &exact)?;
    let (theta_star, error_star) = if oracle {
        let (t, e) = oracle_with(&solver, &range.grid(), &exact)?;
        (Some(t), Some(e))
    } else {
        (None, None)
    };
    drop(solver);
    mesh.set_fill_estimate(Some(crate::mesh::FillEstimate {
        value: fill,
        samples: fill_samples,
    }));
    Ok(EikonalRun {
        record: RunRecord {
            seed,
            nodes: mesh.len(),
            fill,
            separation: mesh.separation(),
            dt,
            theta_bar: out.theta,
            error_bar,
            theta_star,
            error_star,
            residual: out.value.meta.residual,
            iterations: out.value.meta.iterations,
            converged: out.value.meta.converged,
            clamped: mesh.clamped_count(),
            seconds: start.elapsed().as_secs_f64(),
        },
        mesh,
        value: out.value,
        profile: out.profile,
    })
}

pub fn run_random_mesh(spec: &RandomMeshSpec, seed: u64) -> Result<EikonalRun> {
    let start = Instant::now();
    let problem = Eikonal::new(16, spec.target_radius);
    let domain = problem.domain().clone();
    let mesh = generate_random_clustered(&domain, spec.nodes, spec.pool_size, spec.kmeans_iters, seed)?
        .with_recipe(MeshRecipe::RandomClustered {
            domain: domain.clone(),
            n: spec.nodes,
            pool_size: spec.pool_size,
            kmeans_iters: spec.kmeans_iters,
            seed,
        });
    let fill = crate::mesh::estimate_fill_distance(&mesh, &domain, spec.fill_samples, seed ^ 0x5eed)?;
    eikonal_pipeline(&problem, mesh, (fill, spec.fill_samples), seed, &spec.range, &spec.tuner, spec.oracle, start)
}

pub fn run_dynamics_mesh(spec: &DynamicsMeshSpec, seed: u64) -> Result<EikonalRun> {
    let start = Instant::now();
    let problem = Eikonal::new(spec.controls, spec.target_radius);
    let mesh = spec.recipe(seed).build(Some(&problem))?;
    let fill = estimate_trajectory_fill(&mesh, &problem, spec.fill_samples, seed ^ 0x5eed)?;
    eikonal_pipeline(&problem, mesh, (fill, spec.fill_samples), seed, &spec.range, &spec.tuner, spec.oracle, start)
}

/// Run-averaged row of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub label: String,
    pub runs: usize,
    pub failures: usize,
    pub nodes: f64,
    pub fill: f64,
    pub seconds: f64,
    pub theta_bar: f64,
    pub theta_star: Option<f64>,
    pub error_bar: f64,
    pub error_star: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn summarize(label: &str, runs: &[Result<RunRecord>]) -> RowSummary {
    let ok: Vec<&RunRecord> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let star = ok.iter().all(|r| r.error_star.is_some()) && !ok.is_empty();
    RowSummary {
        label: label.to_string(),
        runs: runs.len(),
        failures: runs.len() - ok.len(),
        nodes: mean(ok.iter().map(|r| r.nodes as f64)),
        fill: mean(ok.iter().map(|r| r.fill)),
        seconds: mean(ok.iter().map(|r| r.seconds)),
        theta_bar: mean(ok.iter().map(|r| r.theta_bar)),
        theta_star: star.then(|| mean(ok.iter().map(|r| r.theta_star.unwrap()))),
        error_bar: mean(ok.iter().map(|r| r.error_bar)),
        error_star: star.then(|| mean(ok.iter().map(|r| r.error_star.unwrap()))),
    }
}

/// `f(seed + i)` for `i < repeats`.
pub fn repeat<T>(repeats: usize, seed: u64, f: impl Fn(u64) -> Result<T>) -> Vec<Result<T>> {
    (0..repeats as u64).map(|i| f(seed.wrapping_add(i))).collect()
}

/// Closed-loop Eikonal costs from several starts under four value functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackCostSpec {
    pub grid_nodes: usize,
    pub dt: f64,
    /// Shape parameter on the regular grid; tuned over `range` when absent.
    pub grid_theta: Option<f64>,
    pub range: ParameterRange,
    pub random: RandomMeshSpec,
    pub dynamics: DynamicsMeshSpec,
    pub starts: Vec<[f64; 2]>,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for FeedbackCostSpec {
    fn default() -> Self {
        Self {
            grid_nodes: 41,
            dt: 0.1,
            grid_theta: None,
            range: ParameterRange {
                theta_min: 1.0,
                theta_max: 3.0,
                step: 0.1,
            },
            random: RandomMeshSpec {
                oracle: false,
                ..Default::default()
            },
            dynamics: DynamicsMeshSpec {
                oracle: false,
                ..Default::default()
            },
            starts: vec![[-0.7, -0.7], [0.7, 0.7], [-0.7, 0.7], [0.7, -0.7]],
            horizon: 2.0,
            seed: 0,
        }
    }
}

pub const FEEDBACK_METHODS: [&str; 4] = ["linear", "shepard-regular", "random-mesh", "dynamics-mesh"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub start: [f64; 2],
    /// One entry per [`FEEDBACK_METHODS`] item.
    pub costs: [f64; 4],
    pub arrival: [Option<f64>; 4],
}

pub struct FeedbackCostOutcome {
    pub rows: Vec<CostRow>,
    /// `trajectories[method][start]`
    pub trajectories: Vec<Vec<Trajectory>>,
}

pub fn feedback_cost_table(spec: &FeedbackCostSpec) -> Result<FeedbackCostOutcome> {
    let problem = Eikonal::new(16, spec.random.target_radius);
    let domain = problem.domain().clone();
    let n = spec.grid_nodes;
    let grid = generate_uniform_grid(&domain, &[n, n])?;
    let config = SolverConfig::new(spec.dt);

    let linear_interp = GridInterpolant::new(domain.clone(), vec![n, n])?;
    let linear = value_iteration_with(&problem, &grid, &linear_interp, &config)?;

    let grid_choice = match spec.grid_theta {
        Some(theta) => TunerChoice::Fixed { theta },
        None => TunerChoice::default(),
    };
    let solver = ThetaSolver::new(&problem, &grid, &config, lower_theta(&spec.range, &grid_choice))?;
    let regular = tune(&solver, &spec.range, &grid_choice)?.value;
    drop(solver);
    let regular_model = ShepardModel::new(&grid, regular.meta.sigma)?;

    let random = run_random_mesh(&spec.random, spec.seed)?;
    let random_model = ShepardModel::new(&random.mesh, random.value.meta.sigma)?;
    let dynamics = run_dynamics_mesh(&spec.dynamics, spec.seed)?;
    let dynamics_model = ShepardModel::new(&dynamics.mesh, dynamics.value.meta.sigma)?;

    let methods: [(&dyn Interpolant, &[f64]); 4] = [
        (&linear_interp, &linear.values),
        (&regular_model, &regular.values),
        (&random_model, &random.value.values),
        (&dynamics_model, &dynamics.value.values),
    ];
    let opts = SimulationOptions::default().horizon(spec.horizon);
    let mut trajectories = Vec::new();
    for (interp, values) in methods {
        let law = FeedbackLaw::new(&problem, interp, values, spec.dt)?;
        let runs = crate::par::map_slice(&spec.starts, |x0| {
            crate::feedback::simulate(&problem, &Policy::Feedback(&law), x0, spec.dt, &opts)
        });
        trajectories.push(runs.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let mut rows = Vec::new();
    for (s, start) in spec.starts.iter().enumerate() {
        let mut costs = [0.0; 4];
        let mut arrival = [None; 4];
        for m in 0..4 {
            costs[m] = evaluate_cost(&problem, &trajectories[m][s])?;
            arrival[m] = trajectories[m][s].arrival_time;
        }
        rows.push(CostRow {
            start: *start,
            costs,
            arrival,
        });
    }
    Ok(FeedbackCostOutcome { rows, trajectories })
}

/// Which semi-discretised PDE to control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PdeProblem {
    Heat {
        #[serde(default)]
        params: HeatParams,
    },
    Advection {
        #[serde(default)]
        params: AdvectionParams,
    },
}

impl PdeProblem {
    pub fn build(&self) -> Result<SemiDiscretePde> {
        match self {
            PdeProblem::Heat { params } => heat_problem(params),
            PdeProblem::Advection { params } => advection_problem(params),
        }
    }
}

/// Mesh, tuning and closed-loop setup for a PDE control run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    pub problem: PdeProblem,
    /// Amplitudes of the sine-bump states seeding the mesh.
    pub mesh_amplitudes: Vec<f64>,
    pub mesh_dt: f64,
    pub mesh_controls: usize,
    pub mesh_steps: usize,
    pub solve_dt: f64,
    /// Sweep cap of value iteration; the solver default when absent.
    #[serde(default)]
    pub max_sweeps: Option<usize>,
    pub range: ParameterRange,
    #[serde(default)]
    pub tuner: TunerChoice,
    pub feedback_controls: usize,
    pub horizon: f64,
    /// Amplitudes of the sine-bump initial conditions to simulate.
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub pyramid: bool,
    #[serde(default)]
    pub noise: Option<Noise>,
}

impl PdeSpec {
    /// Nonlinear heat on a `n x n` grid with the reference settings.
    pub fn heat(n: usize) -> Self {
        Self {
            problem: PdeProblem::Heat {
                params: HeatParams {
                    nodes_per_axis: n,
                    ..Default::default()
                },
            },
            mesh_amplitudes: vec![0.5, 1.0],
            mesh_dt: 0.1,
            mesh_controls: 41,
            mesh_steps: 51,
            solve_dt: 0.075,
            max_sweeps: Some(600),
            range: ParameterRange {
                theta_min: 2.0,
                theta_max: 2.4,
                step: 0.05,
            },
            tuner: TunerChoice::default(),
            feedback_controls: 41,
            horizon: 5.0,
            amplitudes: vec![0.5, 0.75, 1.0],
            pyramid: false,
            noise: None,
        }
    }

    /// Bilinear advection on a `n x n` grid with the reference settings.
    pub fn advection(n: usize) -> Self {
        Self {
            problem: PdeProblem::Advection {
                params: AdvectionParams {
                    nodes_per_axis: n,
                    ..Default::default()
                },
            },
            mesh_amplitudes: vec![0.5, 1.0],
            mesh_dt: 0.1,
            mesh_controls: 11,
            mesh_steps: 26,
            solve_dt: 0.05,
            max_sweeps: Some(800),
            range: ParameterRange {
                theta_min: 0.4,
                theta_max: 0.7,
                step: 0.05,
            },
            tuner: TunerChoice::default(),
            feedback_controls: 81,
            horizon: 2.5,
            amplitudes: vec![0.5, 0.75, 1.0],
            pyramid: false,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub label: String,
    pub controlled_cost: f64,
    pub uncontrolled_cost: f64,
    pub controlled_terminal_sup: f64,
    pub uncontrolled_terminal_sup: f64,
    #[serde(skip)]
    pub controlled: Option<Trajectory>,
    #[serde(skip)]
    pub uncontrolled: Option<Trajectory>,
}

#[derive(Debug)]
pub struct PdeOutcome {
    pub nodes: usize,
    pub theta: f64,
    pub value: ValueFunction,
    pub profile: ResidualProfile,
    pub runs: Vec<PdeRun>,
    pub seconds: f64,
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Closed-loop against open-loop (`u = 0`) runs under a stored value function.
pub fn compare_with_uncontrolled(
    problem: &SemiDiscretePde,
    law: &FeedbackLaw<'_>,
    label: &str,
    x0: &[f64],
    options: &SimulationOptions,
) -> Result<PdeRun> {
    let dt = law.dt();
    let c = crate::feedback::simulate(problem, &Policy::Feedback(law), x0, dt, options)?;
    let u = crate::feedback::simulate(problem, &Policy::Constant(0.0), x0, dt, options)?;
    Ok(PdeRun {
        label: label.to_string(),
        controlled_cost: evaluate_cost(problem, &c)?,
        uncontrolled_cost: evaluate_cost(problem, &u)?,
        controlled_terminal_sup: sup_norm(c.terminal()),
        uncontrolled_terminal_sup: sup_norm(u.terminal()),
        controlled: Some(c),
        uncontrolled: Some(u),
    })
}

pub fn run_pde(spec: &PdeSpec, seed: u64) -> Result<PdeOutcome> {
    let start = Instant::now();
    let problem = spec.problem.build()?;
    let (ulo, uhi) = problem
        .controls()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| (a.min(*u), b.max(*u)));
    let recipe = MeshRecipe::DynamicsDriven {
        seeds: SeedStates::States {
            states: spec.mesh_amplitudes.iter().map(|&k| StateSpec::SineBump { k }).collect(),
        },
        controls: control_grid(ulo, uhi, spec.mesh_controls),
        dt: spec.mesh_dt,
        steps: spec.mesh_steps,
        seed,
        options: DynamicsMeshOptions::default(),
    };
    let mesh = recipe.build(Some(&problem))?;
    let mut config = SolverConfig::new(spec.solve_dt);
    config.max_sweeps = spec.max_sweeps;
    let solver = ThetaSolver::new(&problem, &mesh, &config, lower_theta(&spec.range, &spec.tuner))?;
    let out = tune(&solver, &spec.range, &spec.tuner)?;
    drop(solver);
    let model = ShepardModel::new(&mesh, out.value.meta.sigma)?;
    let law = FeedbackLaw::new(&problem, &model, &out.value.values, spec.solve_dt)?
        .with_controls(control_grid(ulo, uhi, spec.feedback_controls))?;
    let mut starts: Vec<(String, Vec<f64>)> = spec
        .amplitudes
        .iter()
        .map(|&k| Ok((format!("k={k}"), problem.ic_class(k)?)))
        .collect::<Result<_>>()?;
    if spec.pyramid {
        starts.push(("pyramid".into(), problem.pyramid_ic()));
    }
    let plain = SimulationOptions::default().horizon(spec.horizon);
    let mut runs: Vec<PdeRun> = crate::par::map_slice(&starts, |(label, x0)| {
        compare_with_uncontrolled(&problem, &law, label, x0, &plain)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    if let Some(noise) = spec.noise {
        let k = if spec.amplitudes.contains(&0.75) { 0.75 } else { spec.amplitudes.first().copied().unwrap_or(0.75) };
        let opts = SimulationOptions {
            noise: Some(noise),
            ..plain
        };
        runs.push(compare_with_uncontrolled(&problem, &law, &format!("k={k}+noise"), &problem.ic_class(k)?, &opts)?);
    }
    Ok(PdeOutcome {
        nodes: mesh.len(),
        theta: out.theta,
        value: out.value,
        profile: out.profile,
        runs,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Unit square domain of the Eikonal examples, for callers building meshes.
pub fn eikonal_domain() -> BoxDomain {
    BoxDomain::cube(2, -1.0, 1.0).expect("valid square")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_tuner_gives_one_row() {
        let spec = RandomMeshSpec {
            nodes: 40,
            pool_size: 2000,
            kmeans_iters: 10,
            tuner: TunerChoice::Fixed { theta: 1.5 },
            fill_samples: 500,
            oracle: false,
            ..Default::default()
        };
        let run = run_random_mesh(&spec, 3).unwrap();
        assert_eq!(run.profile.entries.len(), 1);
        assert_eq!(run.record.theta_bar, 1.5);
        assert_eq!(run.profile.mode, TunerMode::Fixed);
    }

    #[test]
    fn oracle_never_loses_to_the_tuner() {
        let spec = RandomMeshSpec {
            nodes: 60,
            pool_size: 3000,
            kmeans_iters: 20,
            range: ParameterRange::new(0.5, 1.5, 0.25).unwrap(),
            fill_samples: 2000,
            ..Default::default()
        };
        for r in repeat(3, 10, |s| run_random_mesh(&spec, s)) {
            let r = r.unwrap().record;
            assert!(r.error_star.unwrap() <= r.error_bar);
        }
    }

    #[test]
    fn repeat_uses_consecutive_seeds() {
        let seeds: Vec<u64> = repeat(4, 7, Ok).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(seeds, vec![7, 8, 9, 10]);
    }

    #[test]
    fn summary_skips_failures() {
        let ok = |e: f64| {
            Ok(RunRecord {
                seed: 0,
                nodes: 10,
                fill: 0.1,
                separation: 0.01,
                dt: 0.1,
                theta_bar: 1.0,
                error_bar: e,
                theta_star: None,
                error_star: None,
                residual: 0.0,
                iterations: 1,
                converged: true,
                clamped: 0,
                seconds: 0.0,
            })
        };
        let s = summarize("x", &[ok(0.2), Err(Error::TunerExhausted), ok(0.4)]);
        assert_eq!(s.failures, 1);
        assert!((s.error_bar - 0.3).abs() < 1e-15);
        assert!(s.error_star.is_none());
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let bad = r#"{"nodes": 10, "bogus": 1}"#;
        assert!(serde_json::from_str::<RandomMeshSpec>(bad).is_err());
        let spec: PdeSpec = serde_json::from_str(&serde_json::to_string(&PdeSpec::heat(7)).unwrap()).unwrap();
        assert_eq!(spec, PdeSpec::heat(7));
    }
}
