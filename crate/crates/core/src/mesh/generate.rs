use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::index::{dist2, RangeIndex};
use super::{BoxDomain, ScatteredMesh};
use crate::error::{Error, Result};
use crate::par;
use crate::problems::{ControlProblem, StateSpec};

/// Node cap for tensor-product grids.
pub const DEFAULT_GRID_CAP: usize = 10_000_000;

/// Where dynamics-driven trajectories start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeedStates {
    /// `count` states drawn uniformly from the problem domain.
    Uniform { count: usize },
    /// Explicit states or named initial conditions of the problem.
    States { states: Vec<StateSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsMeshOptions {
    /// Points closer than `dedup_rel * diam(domain)` to an existing node are dropped.
    pub dedup_rel: f64,
    /// Relative padding of the safety box around the domain.
    pub safety_margin: f64,
    /// Advance trajectories with the problem's own time stepper instead of
    /// explicit Euler on the drift (needed for stiff PDE semi-discretisations).
    pub problem_stepper: bool,
}

impl Default for DynamicsMeshOptions {
    fn default() -> Self {
        Self {
            dedup_rel: 1e-10,
            safety_margin: 0.0,
            problem_stepper: true,
        }
    }
}

/// Reproducible description of how a mesh was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshRecipe {
    UniformGrid {
        domain: BoxDomain,
        counts: Vec<usize>,
    },
    RandomClustered {
        domain: BoxDomain,
        n: usize,
        pool_size: usize,
        #[serde(default = "default_kmeans_iters")]
        kmeans_iters: usize,
        seed: u64,
    },
    DynamicsDriven {
        seeds: SeedStates,
        controls: Vec<f64>,
        dt: f64,
        steps: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        options: DynamicsMeshOptions,
    },
}

fn default_kmeans_iters() -> usize {
    100
}

impl MeshRecipe {
    pub fn seed(&self) -> Option<u64> {
        match self {
            MeshRecipe::UniformGrid { .. } => None,
            MeshRecipe::RandomClustered { seed, .. } | MeshRecipe::DynamicsDriven { seed, .. } => Some(*seed),
        }
    }

    /// Builds the mesh. Dynamics-driven recipes need the problem.
    pub fn build(&self, problem: Option<&dyn ControlProblem>) -> Result<ScatteredMesh> {
        let mesh = match self {
            MeshRecipe::UniformGrid { domain, counts } => generate_uniform_grid(domain, counts)?,
            MeshRecipe::RandomClustered {
                domain,
                n,
                pool_size,
                kmeans_iters,
                seed,
            } => generate_random_clustered(domain, *n, *pool_size, *kmeans_iters, *seed)?,
            MeshRecipe::DynamicsDriven {
                seeds,
                controls,
                dt,
                steps,
                seed,
                options,
            } => {
                let problem = problem.ok_or_else(|| {
                    Error::input("a dynamics-driven mesh needs a control problem")
                })?;
                let initial = resolve_seed_states(problem, seeds, *seed)?;
                generate_dynamics_mesh(problem, &initial, controls, *dt, *steps, options)?
            }
        };
        Ok(mesh.with_recipe(self.clone()))
    }
}

fn resolve_seed_states(problem: &dyn ControlProblem, seeds: &SeedStates, seed: u64) -> Result<Vec<Vec<f64>>> {
    match seeds {
        SeedStates::Uniform { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dom = problem.domain();
            Ok((0..*count)
                .map(|_| {
                    let mut x = vec![0.0; dom.dim()];
                    dom.sample_into(&mut rng, &mut x);
                    x
                })
                .collect())
        }
        SeedStates::States { states } => states.iter().map(|s| problem.state(s)).collect(),
    }
}

/// Tensor-product equispaced nodes including the box faces. The first axis
/// varies fastest.
pub fn generate_uniform_grid(domain: &BoxDomain, counts: &[usize]) -> Result<ScatteredMesh> {
    generate_uniform_grid_capped(domain, counts, DEFAULT_GRID_CAP)
}

pub(crate) fn generate_uniform_grid_capped(domain: &BoxDomain, counts: &[usize], cap: usize) -> Result<ScatteredMesh> {
    let dim = domain.dim();
    if counts.len() != dim {
        return Err(Error::input(format!("{} axis counts for a {dim}-dimensional box", counts.len())));
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::input("every axis needs at least two nodes"));
    }
    let total = counts
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c))
        .unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::Capacity { requested: total, cap });
    }
    let mut coords = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        for a in 0..dim {
            let (lo, hi) = (domain.lower()[a], domain.upper()[a]);
            let t = idx[a] as f64 / (counts[a] - 1) as f64;
            coords.push(if idx[a] + 1 == counts[a] { hi } else { lo + (hi - lo) * t });
        }
        for a in 0..dim {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    ScatteredMesh::from_flat(dim, coords)
}

/// Lloyd's k-means on a uniform random pool; returns the `n` centroids.
pub fn generate_random_clustered(
    domain: &BoxDomain,
    n: usize,
    pool_size: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ScatteredMesh> {
    if n == 0 || pool_size < n {
        return Err(Error::input(format!("need 1 <= n <= pool_size, got n={n}, pool={pool_size}")));
    }
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = vec![0.0; pool_size * dim];
    for row in pool.chunks_exact_mut(dim) {
        domain.sample_into(&mut rng, row);
    }
    let mut centroids = vec![0.0; n * dim];
    let mut picks = sample(&mut rng, pool_size, n).into_vec();
    picks.sort_unstable();
    for (c, &p) in picks.iter().enumerate() {
        centroids[c * dim..(c + 1) * dim].copy_from_slice(&pool[p * dim..(p + 1) * dim]);
    }

    let volume: f64 = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(lo, hi)| hi - lo)
        .product();
    let cell = (volume / n as f64).powf(1.0 / dim as f64);
    let tol = 1e-6 * domain.diameter();

    for _ in 0..max_iters {
        let index = RangeIndex::build(&centroids, dim, cell);
        let assign = par::map_range(pool_size, |p| {
            index
                .nearest(&centroids, &pool[p * dim..(p + 1) * dim])
                .map(|(c, _)| c)
                .unwrap_or(0)
        });
        let mut sums = vec![0.0; n * dim];
        let mut counts = vec![0usize; n];
        for (p, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for a in 0..dim {
                sums[c * dim + a] += pool[p * dim + a];
            }
        }
        let mut moved: f64 = 0.0;
        for c in 0..n {
            let next: Vec<f64> = if counts[c] == 0 {
                let p = rng.random_range(0..pool_size);
                pool[p * dim..(p + 1) * dim].to_vec()
            } else {
                sums[c * dim..(c + 1) * dim]
                    .iter()
                    .map(|s| s / counts[c] as f64)
                    .collect()
            };
            let slot = &mut centroids[c * dim..(c + 1) * dim];
            moved = moved.max(dist2(slot, &next).sqrt());
            slot.copy_from_slice(&next);
        }
        if moved < tol {
            break;
        }
    }
    ScatteredMesh::from_flat(dim, centroids)
}

/// Incremental duplicate filter keyed on the distance to the first point.
struct Dedup {
    dim: usize,
    tol: f64,
    pivot: Option<Vec<f64>>,
    buckets: HashMap<i64, Vec<usize>>,
}

impl Dedup {
    fn new(dim: usize, tol: f64) -> Self {
        Self {
            dim,
            tol,
            pivot: None,
            buckets: HashMap::new(),
        }
    }

    /// Appends `x` to `coords` unless a stored point lies within `tol`.
    fn insert(&mut self, coords: &mut Vec<f64>, x: &[f64]) -> bool {
        let pivot = self.pivot.get_or_insert_with(|| x.to_vec());
        let key_f = dist2(x, pivot).sqrt() / self.tol;
        let key = key_f.floor() as i64;
        let tol2 = self.tol * self.tol;
        for k in key - 1..=key + 1 {
            if let Some(list) = self.buckets.get(&k) {
                for &i in list {
                    if dist2(&coords[i * self.dim..(i + 1) * self.dim], x) <= tol2 {
                        return false;
                    }
                }
            }
        }
        let idx = coords.len() / self.dim;
        coords.extend_from_slice(x);
        self.buckets.entry(key).or_default().push(idx);
        true
    }
}

/// Union of discrete trajectories `x^{k+1} = step(x^k, u_j, dt)` of length
/// `steps` (initial state included) from every seed state and control.
pub fn generate_dynamics_mesh(
    problem: &dyn ControlProblem,
    initial_states: &[Vec<f64>],
    controls: &[f64],
    dt: f64,
    steps: usize,
    options: &DynamicsMeshOptions,
) -> Result<ScatteredMesh> {
    if !(dt > 0.0) || steps == 0 || initial_states.is_empty() || controls.is_empty() {
        return Err(Error::input("need dt > 0, steps >= 1 and non-empty seeds and controls"));
    }
    let dim = problem.dim();
    if initial_states.iter().any(|x| x.len() != dim) {
        return Err(Error::input("seed state dimension does not match the problem"));
    }
    let safety = problem.domain().inflate(options.safety_margin);
    let tol = options.dedup_rel * problem.domain().diameter();

    // each (seed, control) trajectory is independent
    let pairs: Vec<(usize, usize)> = (0..initial_states.len())
        .flat_map(|i| (0..controls.len()).map(move |j| (i, j)))
        .collect();
    let trajectories = par::map_slice(&pairs, |&(i, j)| -> Result<(Vec<f64>, usize)> {
        let mut traj = Vec::with_capacity(steps * dim);
        let mut clamped = 0usize;
        let mut x = initial_states[i].clone();
        if safety.clamp(&mut x) {
            clamped += 1;
        }
        traj.extend_from_slice(&x);
        let mut next = vec![0.0; dim];
        for _ in 1..steps {
            if options.problem_stepper {
                problem.step(&x, controls[j], dt, &mut next)?;
            } else {
                problem.drift(&x, controls[j], &mut next);
                for (n, xi) in next.iter_mut().zip(&x) {
                    *n = xi + dt * *n;
                }
            }
            if safety.clamp(&mut next) {
                clamped += 1;
            }
            std::mem::swap(&mut x, &mut next);
            traj.extend_from_slice(&x);
        }
        Ok((traj, clamped))
    });

    let mut coords = Vec::new();
    let mut dedup = Dedup::new(dim, tol.max(f64::MIN_POSITIVE));
    let mut clamped = 0;
    for t in trajectories {
        let (traj, c) = t?;
        clamped += c;
        for x in traj.chunks_exact(dim) {
            dedup.insert(&mut coords, x);
        }
    }
    Ok(ScatteredMesh::from_flat(dim, coords)?.with_clamped(clamped))
}

/// Fill distance over the set the trajectories explore: the largest
/// distance from the mesh to states reached from the recipe's seeds under
/// constant controls drawn uniformly between the extreme recipe controls,
/// after a uniform number of steps. Only dynamics-driven meshes qualify.
pub fn estimate_trajectory_fill(
    mesh: &ScatteredMesh,
    problem: &dyn ControlProblem,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let Some(MeshRecipe::DynamicsDriven {
        seeds,
        controls,
        dt,
        steps,
        seed: recipe_seed,
        options,
    }) = mesh.recipe()
    else {
        return Err(Error::input("trajectory fill needs a dynamics-driven mesh"));
    };
    if samples == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    let initial = resolve_seed_states(problem, seeds, *recipe_seed)?;
    let (ulo, uhi) = controls
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| (a.min(*u), b.max(*u)));
    let safety = problem.domain().inflate(options.safety_margin);
    let dim = mesh.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(usize, f64, usize)> = (0..samples)
        .map(|_| {
            let u = if uhi > ulo { rng.random_range(ulo..=uhi) } else { ulo };
            (rng.random_range(0..initial.len()), u, rng.random_range(0..*steps))
        })
        .collect();
    let dists = par::map_slice(&draws, |&(i, u, k)| -> Result<f64> {
        let mut x = initial[i].clone();
        safety.clamp(&mut x);
        let mut next = vec![0.0; dim];
        for _ in 0..k {
            if options.problem_stepper {
                problem.step(&x, u, *dt, &mut next)?;
            } else {
                problem.drift(&x, u, &mut next);
                for (n, xi) in next.iter_mut().zip(&x) {
                    *n = xi + dt * *n;
                }
            }
            safety.clamp(&mut next);
            std::mem::swap(&mut x, &mut next);
        }
        Ok(mesh.nearest(&x)?.1)
    });
    dists.into_iter().try_fold(0.0, |m: f64, d| Ok(m.max(d?)))
}

/// `max_{x in X, u} dist(x + dt f(x,u), X)`, to be compared with `M_f dt`.
pub fn check_mesh_reachability_bound(
    mesh: &ScatteredMesh,
    problem: &dyn ControlProblem,
    dt: f64,
    controls: &[f64],
) -> Result<f64> {
    if mesh.dim() != problem.dim() {
        return Err(Error::input("mesh and problem dimensions differ"));
    }
    let dim = mesh.dim();
    let worst = par::map_range(mesh.len(), |i| {
        let x = mesh.point(i);
        let mut z = vec![0.0; dim];
        let mut worst: f64 = 0.0;
        for &u in controls {
            problem.drift(x, u, &mut z);
            for (zk, xk) in z.iter_mut().zip(x) {
                *zk = xk + dt * *zk;
            }
            let (_, d) = mesh.nearest(&z).expect("dimension checked");
            worst = worst.max(d);
        }
        worst
    });
    Ok(worst.into_iter().fold(0.0, f64::max))
}
