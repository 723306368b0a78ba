//! Fixed-radius neighbour search over a point cloud.
//!
//! Low-dimensional clouds use a hashed bucket grid whose cell edge equals the
//! query radius. Above [`GRID_MAX_DIM`] the grid would visit `3^d` cells, so a
//! linear scan is used instead; candidates are pre-filtered with the triangle
//! inequality against a handful of pivot nodes and the remaining distances are
//! accumulated with early exit.

use std::collections::HashMap;

/// Largest dimension served by the bucket grid.
pub const GRID_MAX_DIM: usize = 8;

const PIVOTS: usize = 4;

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance, giving up as soon as it exceeds `bound2`.
#[inline]
fn dist2_bounded(a: &[f64], b: &[f64], bound2: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(16).zip(b.chunks(16)) {
        for (x, y) in ca.iter().zip(cb) {
            let t = x - y;
            acc += t * t;
        }
        if acc > bound2 {
            return None;
        }
    }
    Some(acc)
}

/// Search structure over a flat `n x dim` coordinate buffer.
#[derive(Debug, Clone)]
pub enum RangeIndex {
    Grid(BucketGrid),
    Scan(PivotScan),
}

impl RangeIndex {
    /// Builds the structure suited to `dim`, tuned for queries of `radius`.
    pub fn build(coords: &[f64], dim: usize, radius: f64) -> Self {
        if dim <= GRID_MAX_DIM {
            RangeIndex::Grid(BucketGrid::new(coords, dim, radius))
        } else {
            RangeIndex::Scan(PivotScan::new(coords, dim))
        }
    }

    /// Nodes with `|x - x_i| <= radius`, as `(index, distance)` pairs.
    pub fn query(&self, coords: &[f64], x: &[f64], radius: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self {
            RangeIndex::Grid(g) => g.query(coords, x, radius, out),
            RangeIndex::Scan(s) => s.query(coords, x, radius, out),
        }
    }

    /// Closest node and its distance. `None` only for an empty cloud.
    pub fn nearest(&self, coords: &[f64], x: &[f64]) -> Option<(usize, f64)> {
        match self {
            RangeIndex::Grid(g) => g.nearest(coords, x),
            RangeIndex::Scan(s) => s.nearest(coords, x),
        }
    }
}

/// Uniform hashed grid of cubic cells.
#[derive(Debug, Clone)]
pub struct BucketGrid {
    dim: usize,
    cell: f64,
    origin: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<u32>>,
    // bounding box of occupied cells, used to stop the nearest-node search
    min_key: Vec<i64>,
    max_key: Vec<i64>,
}

impl BucketGrid {
    pub fn new(coords: &[f64], dim: usize, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell edge must be positive");
        let n = coords.len() / dim;
        let mut origin = vec![f64::INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for (o, v) in origin.iter_mut().zip(p) {
                *o = o.min(*v);
            }
        }
        if n == 0 {
            origin.iter_mut().for_each(|o| *o = 0.0);
        }
        let mut grid = Self {
            dim,
            cell,
            origin,
            cells: HashMap::new(),
            min_key: vec![i64::MAX; dim],
            max_key: vec![i64::MIN; dim],
        };
        for (i, p) in coords.chunks_exact(dim).enumerate() {
            let key = grid.key(p);
            for a in 0..dim {
                grid.min_key[a] = grid.min_key[a].min(key[a]);
                grid.max_key[a] = grid.max_key[a].max(key[a]);
            }
            grid.cells.entry(key).or_default().push(i as u32);
        }
        grid
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.origin)
            .map(|(v, o)| ((v - o) / self.cell).floor() as i64)
            .collect()
    }

    /// Visits all cells whose key lies in `lo..=hi` componentwise, optionally
    /// only those on the shell at Chebyshev distance `shell` from `center`.
    fn for_each_cell<F: FnMut(&[u32])>(&self, center: &[i64], reach: i64, shell_only: bool, mut f: F) {
        let d = self.dim;
        let lo: Vec<i64> = (0..d).map(|a| (center[a] - reach).max(self.min_key[a])).collect();
        let hi: Vec<i64> = (0..d).map(|a| (center[a] + reach).min(self.max_key[a])).collect();
        if (0..d).any(|a| lo[a] > hi[a]) {
            return;
        }
        let mut key = lo.clone();
        loop {
            let on_shell = !shell_only || (0..d).any(|a| (key[a] - center[a]).abs() == reach);
            if on_shell {
                if let Some(bucket) = self.cells.get(&key) {
                    f(bucket);
                }
            }
            // odometer increment
            let mut a = 0;
            loop {
                if a == d {
                    return;
                }
                key[a] += 1;
                if key[a] <= hi[a] {
                    break;
                }
                key[a] = lo[a];
                a += 1;
            }
        }
    }

    pub fn query(&self, coords: &[f64], x: &[f64], radius: f64, out: &mut Vec<(usize, f64)>) {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil().max(1.0) as i64;
        let center = self.key(x);
        let d = self.dim;
        self.for_each_cell(&center, reach, false, |bucket| {
            for &i in bucket {
                let i = i as usize;
                let d2 = dist2(&coords[i * d..(i + 1) * d], x);
                if d2 <= r2 {
                    out.push((i, d2.sqrt()));
                }
            }
        });
    }

    pub fn nearest(&self, coords: &[f64], x: &[f64]) -> Option<(usize, f64)> {
        if self.cells.is_empty() {
            return None;
        }
        let d = self.dim;
        let center = self.key(x);
        // number of shells needed to reach every occupied cell
        let max_reach = (0..d)
            .map(|a| (center[a] - self.min_key[a]).abs().max((self.max_key[a] - center[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        let mut k = 0i64;
        while k <= max_reach {
            self.for_each_cell(&center, k, k > 0, |bucket| {
                for &i in bucket {
                    let i = i as usize;
                    let d2 = dist2(&coords[i * d..(i + 1) * d], x);
                    if best.is_none_or(|(bi, b2)| d2 < b2 || (d2 == b2 && i < bi)) {
                        best = Some((i, d2));
                    }
                }
            });
            if let Some((_, b2)) = best {
                // anything on shell k+1 or beyond is at least k cells away
                let bound = k as f64 * self.cell;
                if bound * bound >= b2 {
                    break;
                }
            }
            k += 1;
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}

/// Linear scan with pivot pre-filtering for high-dimensional clouds.
#[derive(Debug, Clone)]
pub struct PivotScan {
    dim: usize,
    pivots: Vec<Vec<f64>>,
    /// `pivot_dist[i * PIVOTS + p]`
    pivot_dist: Vec<f64>,
    /// node indices sorted by distance to the first pivot
    order: Vec<usize>,
    sorted_key: Vec<f64>,
}

impl PivotScan {
    pub fn new(coords: &[f64], dim: usize) -> Self {
        let n = coords.len() / dim;
        let point = |i: usize| &coords[i * dim..(i + 1) * dim];
        let mut pivots: Vec<Vec<f64>> = Vec::new();
        if n > 0 {
            // farthest-first traversal starting from node 0
            let mut mind = vec![f64::INFINITY; n];
            let mut next = 0usize;
            for _ in 0..PIVOTS.min(n) {
                let p = point(next).to_vec();
                let mut far = 0usize;
                for i in 0..n {
                    mind[i] = mind[i].min(dist2(point(i), &p));
                    if mind[i] > mind[far] {
                        far = i;
                    }
                }
                pivots.push(p);
                next = far;
            }
            while pivots.len() < PIVOTS {
                pivots.push(pivots[0].clone());
            }
        }
        let mut pivot_dist = vec![0.0; n * PIVOTS];
        for i in 0..n {
            for (p, piv) in pivots.iter().enumerate() {
                pivot_dist[i * PIVOTS + p] = dist2(point(i), piv).sqrt();
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            pivot_dist[a * PIVOTS]
                .total_cmp(&pivot_dist[b * PIVOTS])
                .then(a.cmp(&b))
        });
        let sorted_key = order.iter().map(|&i| pivot_dist[i * PIVOTS]).collect();
        Self {
            dim,
            pivots,
            pivot_dist,
            order,
            sorted_key,
        }
    }

    fn query_keys(&self, x: &[f64]) -> [f64; PIVOTS] {
        let mut q = [0.0; PIVOTS];
        for (p, piv) in self.pivots.iter().enumerate() {
            q[p] = dist2(x, piv).sqrt();
        }
        q
    }

    pub fn query(&self, coords: &[f64], x: &[f64], radius: f64, out: &mut Vec<(usize, f64)>) {
        if self.order.is_empty() {
            return;
        }
        let d = self.dim;
        let q = self.query_keys(x);
        let r2 = radius * radius;
        let start = self.sorted_key.partition_point(|&k| k < q[0] - radius);
        for pos in start..self.order.len() {
            if self.sorted_key[pos] > q[0] + radius {
                break;
            }
            let i = self.order[pos];
            let pd = &self.pivot_dist[i * PIVOTS..(i + 1) * PIVOTS];
            if (1..PIVOTS).any(|p| (pd[p] - q[p]).abs() > radius) {
                continue;
            }
            if let Some(d2) = dist2_bounded(&coords[i * d..(i + 1) * d], x, r2) {
                if d2 <= r2 {
                    out.push((i, d2.sqrt()));
                }
            }
        }
    }

    pub fn nearest(&self, coords: &[f64], x: &[f64]) -> Option<(usize, f64)> {
        let n = self.order.len();
        if n == 0 {
            return None;
        }
        let d = self.dim;
        let q = self.query_keys(x);
        let mut best = (usize::MAX, f64::INFINITY);
        let mut best_r = f64::INFINITY;
        // walk outwards from the query's slot in pivot order
        let mid = self.sorted_key.partition_point(|&k| k < q[0]);
        let (mut lo, mut hi) = (mid, mid);
        loop {
            let gap_lo = if lo > 0 { q[0] - self.sorted_key[lo - 1] } else { f64::INFINITY };
            let gap_hi = if hi < n { self.sorted_key[hi] - q[0] } else { f64::INFINITY };
            let (pos, gap) = if gap_lo <= gap_hi {
                if lo == 0 {
                    break;
                }
                lo -= 1;
                (lo, gap_lo)
            } else {
                let p = hi;
                hi += 1;
                (p, gap_hi)
            };
            if gap > best_r {
                break;
            }
            let i = self.order[pos];
            let pd = &self.pivot_dist[i * PIVOTS..(i + 1) * PIVOTS];
            if (1..PIVOTS).any(|p| (pd[p] - q[p]).abs() > best_r) {
                continue;
            }
            let bound2 = if best_r.is_finite() { best_r * best_r } else { f64::INFINITY };
            if let Some(d2) = dist2_bounded(&coords[i * d..(i + 1) * d], x, bound2) {
                if d2 < best.1 || (d2 == best.1 && i < best.0) {
                    best = (i, d2);
                    best_r = d2.sqrt();
                }
            }
        }
        Some((best.0, best.1.sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(coords: &[f64], dim: usize, x: &[f64], r: f64) -> Vec<usize> {
        coords
            .chunks_exact(dim)
            .enumerate()
            .filter(|(_, p)| dist2(p, x) <= r * r)
            .map(|(i, _)| i)
            .collect()
    }

    fn brute_nearest(coords: &[f64], dim: usize, x: &[f64]) -> f64 {
        coords
            .chunks_exact(dim)
            .map(|p| dist2(p, x))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    #[test]
    fn both_structures_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &dim in &[1usize, 2, 3, 5, 9, 20] {
            let n = 300;
            let coords: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let radius = 0.3 * (dim as f64).sqrt();
            let grid = BucketGrid::new(&coords, dim, radius);
            let scan = PivotScan::new(&coords, dim);
            for _ in 0..50 {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.3..1.3)).collect();
                let r = radius * rng.random_range(0.2..2.5);
                let want = brute(&coords, dim, &x, r);
                for got in [
                    {
                        let mut v = Vec::new();
                        grid.query(&coords, &x, r, &mut v);
                        v
                    },
                    {
                        let mut v = Vec::new();
                        scan.query(&coords, &x, r, &mut v);
                        v
                    },
                ] {
                    let mut idx: Vec<usize> = got.iter().map(|p| p.0).collect();
                    idx.sort_unstable();
                    assert_eq!(idx, want, "dim {dim}");
                }
                let nd = brute_nearest(&coords, dim, &x);
                let (_, gd) = grid.nearest(&coords, &x).unwrap();
                let (_, sd) = scan.nearest(&coords, &x).unwrap();
                assert!((gd - nd).abs() < 1e-12);
                assert!((sd - nd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nearest_far_outside_cloud() {
        let coords = vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0];
        let grid = BucketGrid::new(&coords, 2, 0.1);
        let (i, d) = grid.nearest(&coords, &[10.0, 0.0]).unwrap();
        assert_eq!(i, 1);
        assert!((d - 9.0).abs() < 1e-12);
    }
}
