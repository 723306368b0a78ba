//! Scattered point clouds: construction, separation and fill distances,
//! and fixed-radius neighbour search.

mod domain;
mod generate;
pub mod index;
mod io;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use domain::BoxDomain;
pub use generate::{
    check_mesh_reachability_bound, estimate_trajectory_fill, generate_dynamics_mesh, generate_random_clustered,
    generate_uniform_grid, DynamicsMeshOptions, MeshRecipe, SeedStates, DEFAULT_GRID_CAP,
};
pub use index::RangeIndex;
pub use io::{read_mesh, write_mesh, MeshSidecar};

use crate::error::{Error, Result};
use crate::par;
use index::dist2;

/// Default Monte-Carlo sample count for fill-distance estimates.
pub const DEFAULT_FILL_SAMPLES: usize = 100_000;

/// Largest dimension for which fill distances are estimated automatically.
pub const FILL_ESTIMATE_MAX_DIM: usize = 3;

/// Sampled lower bound on the fill distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillEstimate {
    pub value: f64,
    pub samples: usize,
}

/// An immutable cloud of pairwise distinct points in `R^dim`.
#[derive(Debug)]
pub struct ScatteredMesh {
    dim: usize,
    coords: Vec<f64>,
    separation: f64,
    fill: Option<FillEstimate>,
    recipe: Option<MeshRecipe>,
    clamped: usize,
    nearest_index: OnceLock<RangeIndex>,
}

impl Clone for ScatteredMesh {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.clone(),
            separation: self.separation,
            fill: self.fill,
            recipe: self.recipe.clone(),
            clamped: self.clamped,
            nearest_index: OnceLock::new(),
        }
    }
}

impl PartialEq for ScatteredMesh {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.coords.len() == other.coords.len()
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ScatteredMesh {
    /// Builds a mesh from a flat row-major `n x dim` buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("mesh dimension must be at least 1"));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::input(format!(
                "coordinate buffer of length {} is not a non-empty multiple of {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("mesh coordinates must be finite"));
        }
        let separation = if coords.len() / dim == 1 {
            f64::INFINITY
        } else {
            separation_distance_flat(&coords, dim)?
        };
        Ok(Self {
            dim,
            coords,
            separation,
            fill: None,
            recipe: None,
            clamped: 0,
            nearest_index: OnceLock::new(),
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::input("all points must share one dimension"));
        }
        Self::from_flat(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Exact separation distance `q_X`; `+inf` for a single node.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn fill_estimate(&self) -> Option<FillEstimate> {
        self.fill
    }

    pub fn recipe(&self) -> Option<&MeshRecipe> {
        self.recipe.as_ref()
    }

    /// Trajectory points that had to be clamped into the safety box while
    /// building a dynamics-driven mesh.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    pub(crate) fn with_recipe(mut self, recipe: MeshRecipe) -> Self {
        self.recipe = Some(recipe);
        self
    }

    pub(crate) fn with_clamped(mut self, clamped: usize) -> Self {
        self.clamped = clamped;
        self
    }

    pub fn set_fill_estimate(&mut self, fill: Option<FillEstimate>) {
        self.fill = fill;
    }

    /// Estimates and stores the fill distance over `domain`.
    pub fn estimate_fill(&mut self, domain: &BoxDomain, samples: usize, seed: u64) -> Result<f64> {
        let h = estimate_fill_distance(self, domain, samples, seed)?;
        self.fill = Some(FillEstimate { value: h, samples });
        Ok(h)
    }

    fn index(&self) -> &RangeIndex {
        self.nearest_index.get_or_init(|| {
            // Cells near the mean spacing keep the ring search short even
            // when a few nodes nearly coincide.
            let n = self.len();
            let mut diag2 = 0.0;
            for a in 0..self.dim {
                let (lo, hi) = self
                    .coords
                    .iter()
                    .skip(a)
                    .step_by(self.dim)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
                diag2 += (hi - lo) * (hi - lo);
            }
            let spacing = diag2.sqrt() / (n as f64).powf(1.0 / self.dim as f64);
            let cell = if self.separation.is_finite() {
                spacing.max(self.separation).max(1e-300)
            } else {
                1.0
            };
            RangeIndex::build(&self.coords, self.dim, cell)
        })
    }

    /// Builds a search structure specialised for queries of `radius`.
    pub fn range_index(&self, radius: f64) -> RangeIndex {
        RangeIndex::build(&self.coords, self.dim, radius)
    }

    /// All nodes within `radius` of `x` by exhaustive scan.
    pub fn range_query(&self, x: &[f64], radius: f64) -> Result<Vec<(usize, f64)>> {
        self.check_dim(x)?;
        if !(radius > 0.0) {
            return Err(Error::input(format!("radius must be positive, got {radius}")));
        }
        let r2 = radius * radius;
        Ok(self
            .points()
            .enumerate()
            .filter_map(|(i, p)| {
                let d2 = dist2(p, x);
                (d2 <= r2).then(|| (i, d2.sqrt()))
            })
            .collect())
    }

    /// Closest node to `x` and its distance.
    pub fn nearest(&self, x: &[f64]) -> Result<(usize, f64)> {
        self.check_dim(x)?;
        Ok(self
            .index()
            .nearest(&self.coords, x)
            .expect("mesh is never empty"))
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "point has dimension {}, mesh has {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Exact minimal pairwise distance of a point set.
pub fn separation_distance(points: &[Vec<f64>]) -> Result<f64> {
    let dim = points.first().map(Vec::len).unwrap_or(0);
    if points.iter().any(|p| p.len() != dim) || dim == 0 {
        return Err(Error::input("points must be non-empty and share one dimension"));
    }
    separation_distance_flat(&points.concat(), dim)
}

/// Sweep over nodes sorted by distance to a pivot; the triangle inequality
/// bounds how far along the order a closer pair can be.
pub(crate) fn separation_distance_flat(coords: &[f64], dim: usize) -> Result<f64> {
    let n = coords.len() / dim;
    if n < 2 {
        return Err(Error::input("separation distance needs at least two points"));
    }
    let point = |i: usize| &coords[i * dim..(i + 1) * dim];
    // pivot: farthest node from node 0 spreads the keys
    let far = (0..n)
        .max_by(|&a, &b| dist2(point(a), point(0)).total_cmp(&dist2(point(b), point(0))))
        .unwrap_or(0);
    let pivot = point(far);
    let mut keyed: Vec<(f64, usize)> = (0..n).map(|i| (dist2(point(i), pivot).sqrt(), i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // upper bound from consecutive pairs, then refine in parallel
    let mut bound = f64::INFINITY;
    for w in keyed.windows(2) {
        bound = bound.min(dist2(point(w[0].1), point(w[1].1)).sqrt());
    }
    let local = par::map_range(n, |a| {
        let (ka, ia) = keyed[a];
        let mut best = bound;
        let mut dup = None;
        for &(kb, ib) in &keyed[a + 1..] {
            if kb - ka > best {
                break;
            }
            let d = dist2(point(ia), point(ib)).sqrt();
            if d == 0.0 {
                dup = Some((ia.min(ib), ia.max(ib)));
                break;
            }
            best = best.min(d);
        }
        (best, dup)
    });
    let mut q = bound;
    for (best, dup) in local {
        if let Some((i, j)) = dup {
            return Err(Error::DegenerateMesh(format!("nodes {i} and {j} coincide")));
        }
        q = q.min(best);
    }
    if q == 0.0 {
        return Err(Error::DegenerateMesh("two nodes coincide".into()));
    }
    Ok(q)
}

/// Radical-inverse based Halton points in `[0,1)^dim`, shifted by a seeded
/// random offset (Cranley-Patterson rotation). Prefixes are stable, so the
/// estimate below is monotone in the sample count.
pub fn quasi_uniform_samples(domain: &BoxDomain, count: usize, seed: u64) -> Vec<f64> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut out = vec![0.0; count * dim];
    let mut unit = vec![0.0; dim];
    for (k, row) in out.chunks_exact_mut(dim).enumerate() {
        for a in 0..dim {
            let v = if a < PRIMES.len() {
                radical_inverse(k as u64 + 1, PRIMES[a])
            } else {
                rng.random::<f64>()
            };
            unit[a] = (v + shift[a]).fract();
        }
        domain.from_unit(&unit, row);
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += f * (k % base) as f64;
        k /= base;
        f *= inv;
    }
    r
}

/// Largest distance from `sample_count` quasi-uniform samples of `domain`
/// to the mesh. This is a lower bound on the true fill distance.
pub fn estimate_fill_distance(
    mesh: &ScatteredMesh,
    domain: &BoxDomain,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    if domain.dim() != mesh.dim() {
        return Err(Error::input("domain and mesh dimensions differ"));
    }
    let samples = quasi_uniform_samples(domain, sample_count, seed);
    let dim = mesh.dim();
    let index = mesh.index();
    Ok(par::max_over(sample_count, |k| {
        index
            .nearest(mesh.coords(), &samples[k * dim..(k + 1) * dim])
            .map(|(_, d)| d)
            .unwrap_or(0.0)
    }))
}
