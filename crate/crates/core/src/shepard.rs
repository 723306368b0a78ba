//! Shepard moving-least-squares approximation with a compactly supported
//! kernel. Weights `psi_i(x) = phi(|x - x_i|) / sum_j phi(|x - x_j|)` form a
//! partition of unity on the union of the support balls, so the approximant
//! is a convex combination of nodal values and never expands sup-norm
//! distances.
//!
//! Outside that union the denominator vanishes. There the approximant takes
//! the value of the nearest node, which keeps it convex and non-expansive.

use crate::error::{Error, Result};
use crate::kernel::{RadialKernel, WendlandKernel};
use crate::mesh::{RangeIndex, ScatteredMesh};

/// Denominators at or below this are treated as "no coverage".
pub const MIN_DENOMINATOR: f64 = 1e-300;

/// Normalises raw kernel values over a neighbour list. Returns `None` when
/// the query lies outside every support ball.
pub fn normalized_weights<K: RadialKernel + ?Sized>(kernel: &K, neighbours: &[(usize, f64)]) -> Option<Vec<(usize, f64)>> {
    let mut w: Vec<(usize, f64)> = neighbours
        .iter()
        .map(|&(i, r)| (i, kernel.eval(r)))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    let total: f64 = w.iter().map(|p| p.1).sum();
    if !(total > MIN_DENOMINATOR) {
        return None;
    }
    for p in &mut w {
        p.1 /= total;
    }
    Some(w)
}

/// Evaluation of a Shepard approximant at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShepardValue {
    pub value: f64,
    /// The point was outside coverage and the nearest node was used.
    pub fallback: bool,
}

/// The operator `S^sigma` over a fixed mesh.
#[derive(Debug)]
pub struct ShepardModel<'m> {
    mesh: &'m ScatteredMesh,
    kernel: WendlandKernel,
    index: RangeIndex,
    brute_force: bool,
}

impl<'m> ShepardModel<'m> {
    pub fn new(mesh: &'m ScatteredMesh, sigma: f64) -> Result<Self> {
        let kernel = WendlandKernel::new(sigma)?;
        let index = mesh.range_index(kernel.support_radius());
        Ok(Self {
            mesh,
            kernel,
            index,
            brute_force: false,
        })
    }

    /// Shape parameter `sigma = theta / q_X`.
    pub fn with_theta(mesh: &'m ScatteredMesh, theta: f64) -> Result<Self> {
        let q = mesh.separation();
        if !q.is_finite() {
            return Err(Error::input("theta scaling needs at least two mesh nodes"));
        }
        Self::new(mesh, theta / q)
    }

    /// Switches neighbour search to an exhaustive scan.
    pub fn brute_force(mut self, on: bool) -> Self {
        self.brute_force = on;
        self
    }

    pub fn mesh(&self) -> &'m ScatteredMesh {
        self.mesh
    }

    pub fn kernel(&self) -> &WendlandKernel {
        &self.kernel
    }

    pub fn sigma(&self) -> f64 {
        self.kernel.sigma()
    }

    fn neighbours(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        let r = self.kernel.support_radius();
        if self.brute_force {
            out.clear();
            out.extend(self.mesh.range_query(x, r).expect("dimension checked by caller"));
        } else {
            self.index.query(self.mesh.coords(), x, r, out);
        }
    }

    /// Non-zero weights at `x`; empty when `x` is outside coverage.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.mesh.check_dim(x)?;
        let mut nb = Vec::new();
        self.neighbours(x, &mut nb);
        Ok(normalized_weights(&self.kernel, &nb).unwrap_or_default())
    }

    /// `S[V](x)`, with the nearest-node value outside coverage.
    pub fn eval(&self, values: &[f64], x: &[f64]) -> Result<f64> {
        self.eval_detailed(values, x).map(|v| v.value)
    }

    pub fn eval_detailed(&self, values: &[f64], x: &[f64]) -> Result<ShepardValue> {
        if values.len() != self.mesh.len() {
            return Err(Error::input(format!(
                "{} nodal values for a mesh of {} nodes",
                values.len(),
                self.mesh.len()
            )));
        }
        let w = self.weights(x)?;
        if w.is_empty() {
            let (i, _) = self.mesh.nearest(x)?;
            return Ok(ShepardValue {
                value: values[i],
                fallback: true,
            });
        }
        Ok(ShepardValue {
            value: w.iter().map(|&(i, wi)| wi * values[i]).sum(),
            fallback: false,
        })
    }

    /// `max_x |S[V1](x) - S[V2](x)| / |V1 - V2|_inf` over the sample points.
    pub fn operator_norm_check(&self, v1: &[f64], v2: &[f64], samples: &[Vec<f64>]) -> Result<f64> {
        let denom = v1
            .iter()
            .zip(v2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if denom == 0.0 {
            return Err(Error::input("the two value vectors must differ"));
        }
        let mut worst: f64 = 0.0;
        for x in samples {
            let d = (self.eval(v1, x)? - self.eval(v2, x)?).abs();
            worst = worst.max(d / denom);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mesh(n: usize, dim: usize, seed: u64) -> ScatteredMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScatteredMesh::from_flat(dim, (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_node_gets_full_weight() {
        let m = ScatteredMesh::from_points(&[vec![0.0, 0.0]]).unwrap();
        let s = ShepardModel::new(&m, 1.0).unwrap();
        assert_eq!(s.weights(&[0.3, 0.1]).unwrap(), vec![(0, 1.0)]);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let m = ScatteredMesh::from_points(&[vec![0.0], vec![1.0]]).unwrap();
        let s = ShepardModel::new(&m, 1.0).unwrap();
        let w = s.weights(&[0.5]).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|p| (p.1 - 0.5).abs() < 1e-15));
        assert!((s.eval(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn outside_coverage_falls_back_to_nearest() {
        let m = ScatteredMesh::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let s = ShepardModel::new(&m, 10.0).unwrap();
        assert!(s.weights(&[0.5, 0.5]).unwrap().is_empty());
        let v = s.eval_detailed(&[2.0, 7.0], &[0.8, 0.5]).unwrap();
        assert!(v.fallback);
        assert_eq!(v.value, 7.0);
        // on a node with tiny support only that node counts
        assert_eq!(s.eval(&[2.0, 7.0], &[1.0, 0.0]).unwrap(), 7.0);
    }

    #[test]
    fn constants_are_reproduced() {
        let m = random_mesh(80, 2, 1);
        let s = ShepardModel::new(&m, 2.0).unwrap();
        let v = vec![3.25; m.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!((s.eval(&v, &x).unwrap() - 3.25).abs() < 1e-14);
        }
    }

    #[test]
    fn size_and_dimension_errors() {
        let m = random_mesh(10, 2, 3);
        let s = ShepardModel::new(&m, 1.0).unwrap();
        assert!(s.eval(&[1.0; 3], &[0.0, 0.0]).is_err());
        assert!(s.weights(&[0.0]).is_err());
        assert!(ShepardModel::new(&m, 0.0).is_err());
    }

    #[test]
    fn indexed_and_brute_force_agree() {
        for dim in [1usize, 2, 3, 12] {
            let m = random_mesh(200, dim, 5 + dim as u64);
            let sigma = 2.0 / (dim as f64).sqrt();
            let fast = ShepardModel::new(&m, sigma).unwrap();
            let slow = ShepardModel::new(&m, sigma).unwrap().brute_force(true);
            let v: Vec<f64> = (0..m.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..100 {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = fast.eval(&v, &x).unwrap();
                let b = slow.eval(&v, &x).unwrap();
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn norm_check_examples() {
        let m = random_mesh(100, 2, 4);
        let s = ShepardModel::new(&m, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let v1: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v2: Vec<f64> = (0..100).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert!(s.operator_norm_check(&v1, &v2, &samples).unwrap() <= 1.0 + 1e-12);
        let shifted: Vec<f64> = v1.iter().map(|v| v + 0.7).collect();
        let r = s.operator_norm_check(&shifted, &v1, &samples).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let mut bumped = v1.clone();
        bumped[17] += 2e-3;
        assert!(s.operator_norm_check(&bumped, &v1, &samples).unwrap() <= 1.0 + 1e-12);
        assert!(s.operator_norm_check(&v1, &v1, &samples).is_err());
    }
}
