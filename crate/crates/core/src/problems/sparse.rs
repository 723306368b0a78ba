//! Compressed sparse row matrices and the iterative solvers used by the
//! implicit time steppers.

use crate::error::{Error, Result};

/// Relative residual target of the iterative solvers.
pub const SOLVE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles an `n x n` matrix from triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map(|(_, v)| v).unwrap_or(0.0)
    }

    /// `out = A x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Row-scaled copy `diag(w) A`.
    pub fn scale_rows(&self, w: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.vals[k] *= w[r];
            }
        }
        out
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(shift I - scale A) x = b` by Gauss-Seidel sweeps in row order.
/// Converges for strictly diagonally dominant systems and finishes in one
/// sweep when the matrix is lower triangular. `x` holds the initial guess.
pub fn gauss_seidel_shifted(a: &CsrMatrix, shift: f64, scale: f64, b: &[f64], x: &mut [f64]) -> Result<usize> {
    let n = a.dim();
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let max_iter = 10 * n.max(1);
    let mut resid = f64::INFINITY;
    for it in 1..=max_iter {
        for r in 0..n {
            let mut diag = shift;
            let mut acc = b[r];
            for (c, v) in a.row(r) {
                if c == r {
                    diag -= scale * v;
                } else {
                    acc += scale * v * x[c];
                }
            }
            x[r] = acc / diag;
        }
        // residual of the updated iterate
        let mut r2 = 0.0;
        for r in 0..n {
            let ax: f64 = a.row(r).map(|(c, v)| v * x[c]).sum();
            let t = b[r] - (shift * x[r] - scale * ax);
            r2 += t * t;
        }
        resid = r2.sqrt() / bnorm;
        if resid <= SOLVE_RTOL || norm2(b) == 0.0 {
            return Ok(it);
        }
        if !resid.is_finite() {
            break;
        }
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: resid,
    })
}

/// Conjugate gradients for `(diag(w) - scale S) x = rhs` with `S` symmetric
/// and the whole operator positive definite. `x` holds the initial guess.
pub fn cg_weighted(w: &[f64], s: &CsrMatrix, scale: f64, rhs: &[f64], x: &mut [f64]) -> Result<usize> {
    let n = s.dim();
    let apply = |v: &[f64], out: &mut [f64]| {
        s.mul_vec(v, out);
        for i in 0..n {
            out[i] = w[i] * v[i] - scale * out[i];
        }
    };
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    // Jacobi preconditioner
    let diag: Vec<f64> = (0..n).map(|i| w[i] - scale * s.get(i, i)).collect();
    let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 10 * n.max(1);
    let mut resid = norm2(&r) / bnorm;
    if resid <= SOLVE_RTOL {
        return Ok(0);
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        resid = norm2(&r) / bnorm;
        if resid <= SOLVE_RTOL {
            return Ok(it);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 0.5), (0, 1, 3.0)]);
        assert_eq!(m.get(0, 0), 1.5);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        let mut out = [0.0; 2];
        m.mul_vec(&[1.0, 1.0], &mut out);
        assert_eq!(out, [4.5, 2.0]);
    }

    #[test]
    fn gauss_seidel_two_by_two() {
        // (I - A) x = (1, 0) with A = [[0,1],[0,0]]  =>  x = (1, 0)
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0)]);
        let mut x = [0.0, 0.0];
        gauss_seidel_shifted(&a, 1.0, 1.0, &[1.0, 0.0], &mut x).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && x[1].abs() < 1e-14);
    }

    #[test]
    fn cg_solves_spd_system() {
        // 1D Dirichlet Laplacian, (I - 0.5 L) x = b
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -2.0));
            if i > 0 {
                t.push((i, i - 1, 1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, 1.0));
            }
        }
        let s = CsrMatrix::from_triplets(n, t);
        let w = vec![1.0; n];
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        cg_weighted(&w, &s, 0.5, &b, &mut x).unwrap();
        let mut sx = vec![0.0; n];
        s.mul_vec(&x, &mut sx);
        for i in 0..n {
            assert!((x[i] - 0.5 * sx[i] - b[i]).abs() < 1e-9);
        }
    }
}
