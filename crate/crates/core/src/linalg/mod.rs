//! Sparse/dense linear algebra used by every solver: triplet assembly,
//! bordered saddle-point factorizations, nullspace reductions and the
//! constrained generalized eigensolvers (dense and shift-invert iterative).

mod eig;

pub use eig::{
    constrained_dim_estimate, dense_nonsym_pencil, dense_sym_pencil, nonsym_pencil_nearest,
    sym_pencil_extreme, EigOpts, Extreme, NonsymEigs, Route, SymPencilEigs,
};

use crate::error::{CoreError, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

/// Coordinate-format sparse matrix used during assembly.
#[derive(Debug, Clone)]
pub struct CooMat {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl CooMat {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooMat { nrows, ncols, entries: Vec::new() }
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        if v != 0.0 {
            self.entries.push((r as u32, c as u32, v));
        }
    }

    pub fn add_scaled(&mut self, other: &CooMat, s: f64) {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        self.entries
            .extend(other.entries.iter().map(|&(r, c, v)| (r, c, v * s)));
    }

    pub fn transposed(&self) -> CooMat {
        CooMat {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> CooMat {
        CooMat {
            nrows: self.nrows,
            ncols: self.ncols,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect(),
        }
    }

    /// Deduplicated entries sorted by (col, row), ready for CSC construction.
    fn dedup_entries(&self) -> Vec<(u32, u32, f64)> {
        let mut e = self.entries.clone();
        e.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut out: Vec<(u32, u32, f64)> = Vec::with_capacity(e.len());
        for (r, c, v) in e {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out
    }

    pub fn to_csc(&self) -> SparseColMat<usize, f64> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .dedup_entries()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r as usize, c as usize, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("valid triplets")
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r as usize, c as usize)] += v;
        }
        m
    }

    /// y = self * x (accumulating into a fresh vector).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r as usize] += v * x[c as usize];
        }
        y
    }

    /// y = self^T * x.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for &(r, c, v) in &self.entries {
            y[c as usize] += v * x[r as usize];
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.abs()).fold(0.0, f64::max)
    }

    /// Exactly symmetric copy: entries replaced by (A + A^T)/2 evaluated in a
    /// canonical order, so the symmetry defect of the result is bitwise zero.
    pub fn symmetrized(&self) -> CooMat {
        use std::collections::HashMap;
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for (r, c, v) in self.dedup_entries() {
            map.insert((r, c), v);
        }
        let mut out = CooMat::new(self.nrows, self.ncols);
        let mut keys: Vec<(u32, u32)> = map.keys().copied().collect();
        keys.sort_unstable();
        for (r, c) in keys {
            if r <= c {
                let v = map.get(&(r, c)).copied().unwrap_or(0.0);
                let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
                let s = 0.5 * (v + vt);
                out.push(r as usize, c as usize, s);
                if r != c {
                    out.push(c as usize, r as usize, s);
                }
            } else if !map.contains_key(&(c, r)) {
                let s = 0.5 * map[&(r, c)];
                out.push(r as usize, c as usize, s);
                out.push(c as usize, r as usize, s);
            }
        }
        out
    }

    /// Symmetry defect max |A - A^T| entrywise.
    pub fn symmetry_defect(&self) -> f64 {
        use std::collections::HashMap;
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for (r, c, v) in self.dedup_entries() {
            map.insert((r, c), v);
        }
        let mut defect: f64 = 0.0;
        for (&(r, c), &v) in &map {
            let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
            defect = defect.max((v - vt).abs());
        }
        defect
    }
}

/// Sparse LU of a square operator; thin wrapper so call sites stay tidy.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(coo: &CooMat) -> Result<Self> {
        if coo.nrows != coo.ncols {
            return Err(CoreError::LinearSolveFailure("matrix not square".into()));
        }
        let csc = coo.to_csc();
        let lu = csc
            .sp_lu()
            .map_err(|e| CoreError::LinearSolveFailure(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseLu { lu, n: coo.nrows })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve_transpose(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Bordered saddle-point system
/// ```text
///   [ A     s*B^T   0 ] [u]   [f]
///   [ B     0       w ] [p] = [g]
///   [ 0     w^T     0 ] [a]   [0]
/// ```
/// `w` is the pressure-gauge vector (mean-value functional); the border keeps
/// the factorization nonsingular when `B` has the constant-pressure kernel.
pub struct SaddleSolver {
    lu: SparseLu,
    pub n_u: usize,
    pub n_p: usize,
    gauged: bool,
}

impl SaddleSolver {
    pub fn new(a: &CooMat, b: &CooMat, bt_sign: f64, gauge: Option<&[f64]>) -> Result<Self> {
        let n_u = a.nrows;
        let n_p = b.nrows;
        assert_eq!(a.ncols, n_u);
        assert_eq!(b.ncols, n_u);
        let gauged = gauge.is_some();
        let n = n_u + n_p + usize::from(gauged);
        let mut sys = CooMat::new(n, n);
        for &(r, c, v) in &a.entries {
            sys.push(r as usize, c as usize, v);
        }
        for &(r, c, v) in &b.entries {
            sys.push(n_u + r as usize, c as usize, v);
            sys.push(c as usize, n_u + r as usize, bt_sign * v);
        }
        if let Some(w) = gauge {
            assert_eq!(w.len(), n_p);
            for (i, &wi) in w.iter().enumerate() {
                sys.push(n_u + i, n - 1, wi);
                sys.push(n - 1, n_u + i, wi);
            }
        }
        let lu = SparseLu::factor(&sys).map_err(|e| match e {
            CoreError::LinearSolveFailure(m) => CoreError::SaddleSolveFailure(m),
            other => other,
        })?;
        Ok(SaddleSolver { lu, n_u, n_p, gauged })
    }

    pub fn solve(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_u + self.n_p + usize::from(self.gauged);
        let mut rhs = vec![0.0; n];
        rhs[..self.n_u].copy_from_slice(f);
        rhs[self.n_u..self.n_u + self.n_p].copy_from_slice(g);
        let x = self.lu.solve(&rhs);
        (
            x[..self.n_u].to_vec(),
            x[self.n_u..self.n_u + self.n_p].to_vec(),
        )
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense nullspace basis of `B` (columns span {x : Bx = 0}).
pub fn dense_nullspace(b: &CooMat) -> Mat<f64> {
    let bd = b.to_dense();
    let svd = bd.svd().expect("svd");
    let s = svd.S().column_vector().to_owned();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0f64, f64::max);
    let tol = smax * 1e-12 * (b.nrows.max(b.ncols) as f64);
    let rank = (0..s.nrows()).take_while(|&i| s[i] > tol).count();
    let v = svd.V();
    let nz = b.ncols - rank;
    Mat::<f64>::from_fn(b.ncols, nz, |i, j| v[(i, rank + j)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coo_dedup_and_apply() {
        let mut a = CooMat::new(2, 2);
        a.push(0, 0, 1.0);
        a.push(0, 0, 2.0);
        a.push(1, 0, -1.0);
        a.push(1, 1, 4.0);
        let y = a.apply(&[1.0, 2.0]);
        assert_eq!(y, vec![3.0, 7.0]);
        let csc = a.to_csc();
        let x = Mat::<f64>::from_fn(2, 1, |i, _| (i + 1) as f64);
        let z = &csc * &x;
        assert_eq!(z[(0, 0)], 3.0);
        assert_eq!(z[(1, 0)], 7.0);
    }

    #[test]
    fn saddle_with_gauge_solves_singular_constraint() {
        // B has a one-dimensional left kernel z = (2, -1) (row 1 = 2 x row 0),
        // mirroring the constant-pressure kernel of the divergence block; the
        // gauge w must not be orthogonal to z
        let mut a = CooMat::new(2, 2);
        a.push(0, 0, 1.0);
        a.push(1, 1, 1.0);
        let mut b = CooMat::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, 2.0);
        b.push(1, 1, 2.0);
        let gauge = vec![2.0, -1.0];
        let s = SaddleSolver::new(&a, &b, 1.0, Some(&gauge)).unwrap();
        let (u, p) = s.solve(&[1.0, 2.0], &[0.0, 0.0]);
        assert!((u[0] + u[1]).abs() < 1e-12, "constraint violated: {u:?}");
        assert!((2.0 * p[0] - p[1]).abs() < 1e-12, "gauge violated: {p:?}");
    }

    #[test]
    fn nullspace_of_divergence_like_matrix() {
        let mut b = CooMat::new(1, 3);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        b.push(0, 2, 1.0);
        let z = dense_nullspace(&b);
        assert_eq!(z.ncols(), 2);
        for j in 0..2 {
            let s: f64 = (0..3).map(|i| z[(i, j)]).sum();
            assert!(s.abs() < 1e-12);
        }
    }
}
