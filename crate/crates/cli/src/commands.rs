use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use shepard_hjb::experiments::{
    feedback_cost_table, repeat, run_dynamics_mesh, run_pde, run_random_mesh, summarize, tune, DynamicsMeshSpec,
    EikonalRun, FeedbackCostSpec, PdeSpec, RandomMeshSpec, RowSummary, RunRecord, TunerChoice, FEEDBACK_METHODS,
};
use shepard_hjb::feedback::{evaluate_cost, simulate, FeedbackLaw, Policy, SimulationOptions, Trajectory};
use shepard_hjb::io::fmt_f64;
use shepard_hjb::mesh::{
    estimate_fill_distance, estimate_trajectory_fill, read_mesh, write_mesh, FillEstimate, ScatteredMesh,
    FILL_ESTIMATE_MAX_DIM,
};
use shepard_hjb::problems::{control_grid, ControlProblem, CustomProblem};
use shepard_hjb::solver::{read_value_function, sup_diff, write_value_function, BellmanOperator, SolverConfig};
use shepard_hjb::tuner::{GradientOptions, ResidualProfile, ThetaSolver};
use shepard_hjb::{par, MeshRecipe, RadialKernel, ShepardModel};

use crate::config::ExperimentConfig;
use crate::exit::CliError;

/// Resolved configuration plus command-line overrides.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub hash: String,
    pub fixed_theta: Option<f64>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::Io(format!("{}: {e}", self.out.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_hash: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let text = serde_json::to_string_pretty(&Wrapped {
            config_hash: &self.hash,
            body,
        })
        .map_err(|e| CliError::Failed(e.to_string()))?;
        fs::write(self.path(name), text + "\n")?;
        Ok(())
    }
}

/// Overrides the recipe seed with the run seed.
pub fn apply_seed(cfg: &mut ExperimentConfig, seed: u64) {
    cfg.seed = seed;
    if let Some(MeshRecipe::RandomClustered { seed: s, .. } | MeshRecipe::DynamicsDriven { seed: s, .. }) =
        cfg.mesh.as_mut()
    {
        *s = seed;
    }
}

fn build_mesh(ctx: &Context, problem: &dyn ControlProblem) -> Result<ScatteredMesh, CliError> {
    let mut mesh = match (&ctx.cfg.mesh, &ctx.cfg.mesh_file) {
        (Some(recipe), _) => recipe.build(Some(problem))?,
        (None, Some(path)) => read_mesh(path)?,
        (None, None) => return Err(CliError::Input("config needs a mesh recipe or a mesh_file".into())),
    };
    if mesh.dim() != problem.dim() {
        return Err(CliError::Input(format!(
            "mesh dimension {} does not match problem dimension {}",
            mesh.dim(),
            problem.dim()
        )));
    }
    if mesh.fill_estimate().is_none() && mesh.dim() <= FILL_ESTIMATE_MAX_DIM {
        let samples = ctx.cfg.solver.fill_samples.unwrap_or(100_000);
        let seed = ctx.cfg.seed ^ 0x5eed;
        let h = if matches!(mesh.recipe(), Some(MeshRecipe::DynamicsDriven { .. })) {
            estimate_trajectory_fill(&mesh, problem, samples, seed)?
        } else {
            estimate_fill_distance(&mesh, problem.domain(), samples, seed)?
        };
        mesh.set_fill_estimate(Some(FillEstimate { value: h, samples }));
    }
    Ok(mesh)
}

fn fill_text(mesh: &ScatteredMesh) -> String {
    mesh.fill_estimate()
        .map(|f| format!("{:.6}", f.value))
        .unwrap_or_else(|| "not estimated".into())
}

pub fn cmd_mesh(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.cfg.problem.build()?;
    let mesh = build_mesh(ctx, problem.as_ref())?;
    ctx.ensure_out()?;
    write_mesh(&mesh, &ctx.path("mesh.csv"), Some(&ctx.hash))?;
    println!(
        "n = {}  q_X = {:.6e}  h = {}  clamped = {}",
        mesh.len(),
        mesh.separation(),
        fill_text(&mesh),
        mesh.clamped_count()
    );
    Ok(())
}

fn solver_config(ctx: &Context, mesh: &ScatteredMesh) -> Result<SolverConfig, CliError> {
    let s = &ctx.cfg.solver;
    let dt = match (s.dt, mesh.fill_estimate()) {
        (Some(dt), _) => dt,
        (None, Some(f)) => f.value,
        (None, None) => {
            return Err(CliError::Input(
                "solver.dt is required when the fill distance is not estimated".into(),
            ))
        }
    };
    let mut c = SolverConfig::new(dt);
    if let Some(t) = s.vi_tolerance {
        c = c.with_tolerance(t);
    }
    c.max_sweeps = s.max_sweeps;
    if let Some(p) = s.pin_target {
        c.pin_target = p;
    }
    Ok(c)
}

fn tuner_choice(ctx: &Context) -> Result<(shepard_hjb::tuner::ParameterRange, TunerChoice), CliError> {
    match (ctx.fixed_theta, &ctx.cfg.tuner) {
        (Some(theta), _) => Ok((shepard_hjb::tuner::ParameterRange::single(theta), TunerChoice::Fixed { theta })),
        (None, Some(t)) => Ok((t.range, t.method)),
        (None, None) => Err(CliError::Input("config needs a tuner block or --fixed-theta".into())),
    }
}

#[derive(Serialize)]
struct ProfileSidecar<'a> {
    #[serde(flatten)]
    profile: &'a ResidualProfile,
}

pub fn cmd_solve(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.cfg.problem.build()?;
    let mesh = build_mesh(ctx, problem.as_ref())?;
    let config = solver_config(ctx, &mesh)?;
    config.validate(problem.as_ref())?;
    let (range, choice) = tuner_choice(ctx)?;
    range.validate()?;
    let lower = match choice {
        TunerChoice::Fixed { theta } => theta,
        _ => range.theta_min,
    };
    let solver = ThetaSolver::new(problem.as_ref(), &mesh, &config, lower)?;
    let out = tune(&solver, &range, &choice)?;
    drop(solver);
    ctx.ensure_out()?;
    write_mesh(&mesh, &ctx.path("mesh.csv"), Some(&ctx.hash))?;
    write_value_function(&out.value, &mesh, &ctx.path("value.csv"), Some(&ctx.hash))?;
    out.profile.write_csv(&ctx.path("profile.csv"))?;
    ctx.write_json("profile.json", &ProfileSidecar { profile: &out.profile })?;
    let m = &out.value.meta;
    println!(
        "n = {}  dt = {}  theta = {}  sigma = {:.6e}  sweeps = {}  residual = {:.3e}  converged = {}",
        mesh.len(),
        fmt_f64(m.dt),
        out.theta,
        m.sigma,
        m.iterations,
        m.residual,
        m.converged
    );
    if let Some(exact) = mesh
        .points()
        .map(|x| problem.exact_value(x))
        .collect::<Option<Vec<f64>>>()
    {
        if let Ok(e) = shepard_hjb::feedback::relative_error(&out.value.values, &exact) {
            println!("relative error = {e:.6}");
        }
    }
    if !m.converged {
        return Err(CliError::NotConverged(format!(
            "value iteration stopped after {} sweeps with delta {:.3e}; artifacts written",
            m.iterations, m.final_delta
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CostEntry {
    start: usize,
    controlled: f64,
    uncontrolled: Option<f64>,
    arrival_time: Option<f64>,
    truncated: bool,
    fallback_steps: usize,
    noise_seed: Option<u64>,
}

#[derive(Serialize)]
struct CostSidecar<'a> {
    runs: &'a [CostEntry],
}

pub fn cmd_simulate(ctx: &Context) -> Result<(), CliError> {
    let sim = ctx
        .cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Input("config needs a simulate block".into()))?;
    let problem = ctx.cfg.problem.build()?;
    let (mesh, vf) = read_value_function(&ctx.path("value.csv"))?;
    if mesh.dim() != problem.dim() {
        return Err(CliError::Input("stored value function does not match the problem dimension".into()));
    }
    let model = ShepardModel::new(&mesh, vf.meta.sigma)?;
    let dt = sim.dt.unwrap_or(vf.meta.dt);
    let mut law = FeedbackLaw::new(problem.as_ref(), &model, &vf.values, dt)?;
    if let Some(count) = sim.feedback_controls {
        let (lo, hi) = problem
            .controls()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| (a.min(*u), b.max(*u)));
        if count == 0 {
            return Err(CliError::Input("feedback_controls must be at least 1".into()));
        }
        law = law.with_controls(control_grid(lo, hi, count))?;
    }
    let opts = SimulationOptions {
        horizon: sim.horizon,
        noise: sim.noise,
        ..Default::default()
    };
    let starts: Vec<Vec<f64>> = sim
        .starts
        .iter()
        .map(|s| problem.state(s))
        .collect::<Result<_, _>>()?;
    type Pair = (Trajectory, Option<Trajectory>);
    let runs: Vec<Result<Pair, shepard_hjb::Error>> = par::map_slice(&starts, |x0| {
        let c = simulate(problem.as_ref(), &Policy::Feedback(&law), x0, dt, &opts)?;
        let u = if sim.uncontrolled {
            Some(simulate(problem.as_ref(), &Policy::Constant(0.0), x0, dt, &opts)?)
        } else {
            None
        };
        Ok((c, u))
    });
    ctx.ensure_out()?;
    let mut entries = Vec::new();
    let mut csv = String::from("start,controlled,uncontrolled,arrival_time,truncated\n");
    for (i, r) in runs.into_iter().enumerate() {
        let (c, u) = r?;
        c.write_csv(&ctx.path(&format!("trajectory_{i}.csv")))?;
        for &k in &sim.snapshots {
            if k < c.states.len() {
                c.write_snapshot(k, &ctx.path(&format!("trajectory_{i}_step{k}.csv")))?;
            }
        }
        let controlled = evaluate_cost(problem.as_ref(), &c)?;
        let uncontrolled = match &u {
            Some(u) => {
                u.write_csv(&ctx.path(&format!("trajectory_{i}_uncontrolled.csv")))?;
                for &k in &sim.snapshots {
                    if k < u.states.len() {
                        u.write_snapshot(k, &ctx.path(&format!("trajectory_{i}_uncontrolled_step{k}.csv")))?;
                    }
                }
                Some(evaluate_cost(problem.as_ref(), u)?)
            }
            None => None,
        };
        csv += &format!(
            "{i},{},{},{},{}\n",
            fmt_f64(controlled),
            uncontrolled.map(fmt_f64).unwrap_or_default(),
            c.arrival_time.map(fmt_f64).unwrap_or_default(),
            c.truncated
        );
        println!(
            "start {i}: controlled cost {controlled:.6}{}{}",
            uncontrolled.map(|v| format!("  uncontrolled cost {v:.6}")).unwrap_or_default(),
            c.arrival_time.map(|t| format!("  arrival {t:.4}")).unwrap_or_default()
        );
        entries.push(CostEntry {
            start: i,
            controlled,
            uncontrolled,
            arrival_time: c.arrival_time,
            truncated: c.truncated,
            fallback_steps: c.fallback_steps,
            noise_seed: c.noise_seed,
        });
    }
    fs::write(ctx.path("costs.csv"), csv)?;
    ctx.write_json("costs.json", &CostSidecar { runs: &entries })?;
    Ok(())
}

pub const TABLES: [&str; 5] = ["example1", "example2", "example2-gradient", "feedback-costs", "pde"];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_run_rows(path: &Path, rows: &[(String, Result<RunRecord, String>)]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "row,seed,nodes,fill,separation,dt,theta_bar,theta_star,error_bar,error_star,residual,iterations,converged,seconds,status"
    )?;
    for (label, r) in rows {
        match r {
            Ok(r) => writeln!(
                f,
                "{label},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
                r.seed,
                r.nodes,
                fmt_f64(r.fill),
                fmt_f64(r.separation),
                fmt_f64(r.dt),
                fmt_f64(r.theta_bar),
                opt(r.theta_star),
                fmt_f64(r.error_bar),
                opt(r.error_star),
                fmt_f64(r.residual),
                r.iterations,
                r.converged,
                fmt_f64(r.seconds)
            )?,
            Err(e) => writeln!(f, "{label},,,,,,,,,,,,,,failed: {}", e.replace(',', ";"))?,
        }
    }
    Ok(())
}

fn write_summary(path: &Path, rows: &[RowSummary]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "row,h,points,cpu_seconds,theta_bar,theta_star,error_bar,error_star,runs,failures")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            r.label,
            fmt_f64(r.fill),
            fmt_f64(r.nodes),
            fmt_f64(r.seconds),
            fmt_f64(r.theta_bar),
            opt(r.theta_star),
            fmt_f64(r.error_bar),
            opt(r.error_star),
            r.runs,
            r.failures
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TableSidecar<'a, T: Serialize> {
    table: &'a str,
    repeats: usize,
    rows: &'a T,
}

fn averaged_table(
    ctx: &Context,
    id: &str,
    rows: Vec<(String, Box<dyn Fn(u64) -> shepard_hjb::Result<EikonalRun> + '_>)>,
) -> Result<(), CliError> {
    let repeats = ctx.cfg.repeats;
    let mut raw = Vec::new();
    let mut summaries = Vec::new();
    for (label, run) in rows {
        let records: Vec<shepard_hjb::Result<RunRecord>> =
            repeat(repeats, ctx.cfg.seed, |s| run(s).map(|r| r.record));
        let s = summarize(&label, &records);
        println!(
            "{label}: points {:.0}  h {:.4}  theta_bar {:.2}  theta_star {}  E(bar) {:.4}  E(star) {}  failures {}",
            s.nodes,
            s.fill,
            s.theta_bar,
            s.theta_star.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()),
            s.error_bar,
            s.error_star.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into()),
            s.failures
        );
        summaries.push(s);
        raw.extend(records.into_iter().map(|r| (label.clone(), r.map_err(|e| e.to_string()))));
    }
    ctx.ensure_out()?;
    write_summary(&ctx.path(&format!("{id}.csv")), &summaries)?;
    write_run_rows(&ctx.path(&format!("{id}_runs.csv")), &raw)?;
    ctx.write_json(
        &format!("{id}.json"),
        &TableSidecar {
            table: id,
            repeats,
            rows: &summaries,
        },
    )?;
    let failures: usize = summaries.iter().map(|s| s.failures).sum();
    if failures > 0 {
        return Err(CliError::Failed(format!("{failures} run(s) failed; see {id}_runs.csv")));
    }
    Ok(())
}

pub fn cmd_table(ctx: &Context, id: &str) -> Result<(), CliError> {
    let t = &ctx.cfg.table;
    match id {
        "example1" => {
            let spec = t.example1.clone().unwrap_or_default();
            let sizes = t.example1_sizes.clone().unwrap_or_else(|| vec![spec.nodes]);
            let rows = sizes
                .into_iter()
                .map(|n| {
                    let s = RandomMeshSpec { nodes: n, ..spec.clone() };
                    let f: Box<dyn Fn(u64) -> _> = Box::new(move |seed| run_random_mesh(&s, seed));
                    (format!("n={n}"), f)
                })
                .collect();
            averaged_table(ctx, id, rows)
        }
        "example2" | "example2-gradient" => {
            let gradient = id == "example2-gradient";
            let specs = if gradient { t.example2_gradient.clone() } else { t.example2.clone() };
            let specs = match specs {
                Some(s) => s,
                None => {
                    let levels: &[usize] = if gradient { &[0, 1] } else { &[0, 1, 2] };
                    levels
                        .iter()
                        .map(|&l| {
                            let mut s = DynamicsMeshSpec::reference(l).expect("reference level");
                            if gradient {
                                s.tuner = TunerChoice::Gradient {
                                    options: GradientOptions::default(),
                                };
                            }
                            s
                        })
                        .collect()
                }
            };
            let rows = specs
                .into_iter()
                .map(|s| {
                    let label = format!("dt={} L={} M={} K={}", s.mesh_dt, s.seeds, s.controls, s.steps);
                    let f: Box<dyn Fn(u64) -> _> = Box::new(move |seed| run_dynamics_mesh(&s, seed));
                    (label, f)
                })
                .collect();
            averaged_table(ctx, id, rows)
        }
        "feedback-costs" => {
            let mut spec = t.feedback_costs.clone().unwrap_or_else(FeedbackCostSpec::default);
            spec.seed = ctx.cfg.seed;
            let out = feedback_cost_table(&spec)?;
            ctx.ensure_out()?;
            let mut csv = format!("x1,x2,{}\n", FEEDBACK_METHODS.join(","));
            for r in &out.rows {
                let costs: Vec<String> = r.costs.iter().map(|c| fmt_f64(*c)).collect();
                csv += &format!("{},{},{}\n", fmt_f64(r.start[0]), fmt_f64(r.start[1]), costs.join(","));
                println!(
                    "({:+.1}, {:+.1})  {}",
                    r.start[0],
                    r.start[1],
                    r.costs.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join("  ")
                );
            }
            fs::write(ctx.path("feedback-costs.csv"), csv)?;
            for (m, name) in FEEDBACK_METHODS.iter().enumerate() {
                for (s, traj) in out.trajectories[m].iter().enumerate() {
                    traj.write_csv(&ctx.path(&format!("feedback-costs_{name}_{s}.csv")))?;
                }
            }
            ctx.write_json(
                "feedback-costs.json",
                &TableSidecar {
                    table: id,
                    repeats: 1,
                    rows: &out.rows,
                },
            )
        }
        "pde" => {
            let spec = t.pde.clone().unwrap_or_else(|| PdeSpec::heat(15));
            let out = run_pde(&spec, ctx.cfg.seed)?;
            ctx.ensure_out()?;
            let mut csv = String::from("run,controlled_cost,uncontrolled_cost,controlled_terminal_sup,uncontrolled_terminal_sup\n");
            println!("nodes {}  theta {}  converged {}", out.nodes, out.theta, out.value.meta.converged);
            for (i, r) in out.runs.iter().enumerate() {
                csv += &format!(
                    "{},{},{},{},{}\n",
                    r.label,
                    fmt_f64(r.controlled_cost),
                    fmt_f64(r.uncontrolled_cost),
                    fmt_f64(r.controlled_terminal_sup),
                    fmt_f64(r.uncontrolled_terminal_sup)
                );
                println!(
                    "{}: controlled {:.6}  uncontrolled {:.6}  terminal sup {:.4} / {:.4}",
                    r.label, r.controlled_cost, r.uncontrolled_cost, r.controlled_terminal_sup, r.uncontrolled_terminal_sup
                );
                if let (Some(c), Some(u)) = (&r.controlled, &r.uncontrolled) {
                    c.write_csv(&ctx.path(&format!("pde_{i}_controlled.csv")))?;
                    u.write_csv(&ctx.path(&format!("pde_{i}_uncontrolled.csv")))?;
                    c.write_snapshot(c.states.len() - 1, &ctx.path(&format!("pde_{i}_controlled_final.csv")))?;
                    u.write_snapshot(u.states.len() - 1, &ctx.path(&format!("pde_{i}_uncontrolled_final.csv")))?;
                }
            }
            fs::write(ctx.path("pde.csv"), csv)?;
            out.profile.write_csv(&ctx.path("pde_profile.csv"))?;
            ctx.write_json(
                "pde.json",
                &TableSidecar {
                    table: id,
                    repeats: 1,
                    rows: &out.runs,
                },
            )?;
            if !out.value.meta.converged {
                return Err(CliError::NotConverged("value iteration hit the sweep cap".into()));
            }
            Ok(())
        }
        other => Err(CliError::Input(format!("unknown table {other:?}; expected one of {}", TABLES.join(", ")))),
    }
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Contraction, partition of unity, range search and the closed-form fixed
/// point on the configured mesh.
pub fn cmd_check(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.cfg.problem.build()?;
    let mesh = build_mesh(ctx, problem.as_ref())?;
    let config = solver_config(ctx, &mesh)?;
    config.validate(problem.as_ref())?;
    let theta = ctx
        .fixed_theta
        .or(ctx.cfg.tuner.as_ref().map(|t| t.range.theta_min))
        .unwrap_or(1.0);
    let model = ShepardModel::with_theta(&mesh, theta)?;
    let n = mesh.len();
    let dim = mesh.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut checks = Vec::new();

    let op = BellmanOperator::new(problem.as_ref(), &model, &config)?;
    let factor = 1.0 - config.dt * problem.discount();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let v1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lhs = sup_diff(&op.apply(&v1)?, &op.apply(&v2)?);
        worst = worst.max(lhs - factor * sup_diff(&v1, &v2));
    }
    checks.push(Check {
        name: "contraction",
        pass: worst <= 1e-12,
        detail: format!("max excess {worst:.3e} over 100 pairs"),
    });

    let radius = model.kernel().support_radius();
    let mut pou: f64 = 0.0;
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let j = rng.random_range(0..n);
        let x: Vec<f64> = mesh
            .point(j)
            .iter()
            .map(|c| c + rng.random_range(-0.5..0.5) * radius / (dim as f64).sqrt())
            .collect();
        let w = model.weights(&x)?;
        pou = pou.max((w.iter().map(|p| p.1).sum::<f64>() - 1.0).abs());
        let mut brute: Vec<usize> = mesh.range_query(&x, radius)?.iter().map(|p| p.0).collect();
        let mut fast: Vec<usize> = ShepardModel::with_theta(&mesh, theta)?
            .brute_force(false)
            .weights(&x)?
            .iter()
            .map(|p| p.0)
            .collect();
        brute.sort_unstable();
        fast.sort_unstable();
        // weights drop nodes exactly on the support boundary
        if !fast.iter().all(|i| brute.binary_search(i).is_ok()) {
            mismatches += 1;
        }
    }
    checks.push(Check {
        name: "partition-of-unity",
        pass: pou <= 1e-12,
        detail: format!("max |sum w - 1| = {pou:.3e} at 10000 covered points"),
    });
    let index = mesh.range_index(radius);
    let mut buf = Vec::new();
    for _ in 0..1000 {
        let mut x = vec![0.0; dim];
        problem.domain().sample_into(&mut rng, &mut x);
        let mut brute: Vec<usize> = mesh.range_query(&x, radius)?.iter().map(|p| p.0).collect();
        index.query(mesh.coords(), &x, radius, &mut buf);
        let mut fast: Vec<usize> = buf.iter().map(|p| p.0).collect();
        brute.sort_unstable();
        fast.sort_unstable();
        mismatches += (brute != fast) as usize;
    }
    checks.push(Check {
        name: "range-search",
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches against the exhaustive scan"),
    });

    let mut fp_worst: f64 = 0.0;
    let mut fp_residual: f64 = 0.0;
    for c in [0.0, 1.0, 3.7] {
        for lambda in [0.5, 1.0, 2.0] {
            let p = CustomProblem::stationary(dim, c, lambda);
            let dt = (0.5 / lambda).min(config.dt);
            let cfg = SolverConfig::new(dt).with_tolerance(1e-13).with_max_sweeps(100_000);
            let vf = shepard_hjb::solver::value_iteration(&p, &model, &cfg, None)?;
            fp_worst = fp_worst.max(vf.values.iter().map(|v| (v - c / lambda).abs()).fold(0.0, f64::max));
            let exact = vec![c / lambda; n];
            fp_residual = fp_residual.max(BellmanOperator::new(&p, &model, &cfg)?.residual(&exact)?);
        }
    }
    checks.push(Check {
        name: "closed-form-fixed-point",
        pass: fp_worst <= 1e-8 && fp_residual <= 1e-12,
        detail: format!("max |V - c/lambda| = {fp_worst:.3e}, residual at c/lambda = {fp_residual:.3e}"),
    });

    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += !c.pass as usize;
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} check(s) failed")));
    }
    Ok(())
}
