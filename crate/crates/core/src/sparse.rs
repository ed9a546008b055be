//! Symmetric sparse Laplacians on a fixed vertex adjacency, and grounded solves.

use std::sync::Arc;

use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::Ldl;

use crate::error::{Error, Result};
use crate::mesh::{SimplicialSurface, Vec3};

/// Systems up to this size are factored directly; larger ones use Jacobi-PCG.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;

/// Relative residual target for the iterative path.
pub const CG_TOL: f64 = 1e-12;

/// CSR layout of "vertex adjacency plus diagonal", shared by every Laplacian
/// assembled on the same surface.
#[derive(Debug)]
pub struct LaplacianPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag_pos: Vec<usize>,
    /// Positions of `(i, j)` and `(j, i)` for every edge `[i, j]`.
    edge_pos: Vec<[usize; 2]>,
}

impl LaplacianPattern {
    pub fn new(n: usize, edges: &[[usize; 2]]) -> Self {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &[a, b] in edges {
            cols[a].push(b);
            cols[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(n + 2 * edges.len());
        row_ptr.push(0);
        for c in &mut cols {
            c.sort_unstable();
            col_idx.extend_from_slice(c);
            row_ptr.push(col_idx.len());
        }
        let find = |i: usize, j: usize| -> usize {
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + row.binary_search(&j).expect("entry in pattern")
        };
        let diag_pos = (0..n).map(|i| find(i, i)).collect();
        let edge_pos = edges.iter().map(|&[a, b]| [find(a, b), find(b, a)]).collect();
        LaplacianPattern { n, row_ptr, col_idx, diag_pos, edge_pos }
    }
}

/// An n×n symmetric matrix with zero row sums, stored in CSR form.
#[derive(Clone, Debug)]
pub struct SparseLaplacian {
    pattern: Arc<LaplacianPattern>,
    values: Vec<f64>,
}

impl SparseLaplacian {
    /// Laplacian with off-diagonal `-w[e]` on edge `e` and diagonal equal to
    /// minus the off-diagonal row sum.
    pub fn from_edge_weights(surface: &SimplicialSurface, weights: &[f64]) -> Self {
        let pattern = surface.laplacian_pattern();
        let mut values = vec![0.0; pattern.col_idx.len()];
        for (&[pij, pji], &w) in pattern.edge_pos.iter().zip(weights) {
            values[pij] = -w;
            values[pji] = -w;
        }
        for i in 0..pattern.n {
            let (lo, hi) = (pattern.row_ptr[i], pattern.row_ptr[i + 1]);
            let d = pattern.diag_pos[i];
            let off: f64 = (lo..hi).filter(|&k| k != d).map(|k| values[k]).sum();
            values[d] = -off;
        }
        SparseLaplacian { pattern, values }
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let p = &self.pattern;
        let row = &p.col_idx[p.row_ptr[i]..p.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[p.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let p = &self.pattern;
        let r = p.row_ptr[i]..p.row_ptr[i + 1];
        p.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `L f` applied to each coordinate column of an n×3 field.
    pub fn mul_rows(&self, f: &[Vec3]) -> Vec<Vec3> {
        (0..self.dim())
            .map(|i| self.row(i).fold(Vec3::zeros(), |acc, (j, v)| acc + f[j] * v))
            .collect()
    }

    /// Prepare solves of `L x = b` with `x[ground] = 0`.
    pub fn grounded(&self, ground: usize) -> Result<GroundedSolver> {
        GroundedSolver::new(self.clone(), ground)
    }
}

enum Backend {
    Direct(Box<sprs_ldl::LdlNumeric<f64, usize>>),
    Iterative,
}

/// Solver for a Laplacian with one vertex pinned to zero, which removes the
/// constant null space.
pub struct GroundedSolver {
    matrix: SparseLaplacian,
    ground: usize,
    backend: Backend,
}

impl GroundedSolver {
    fn new(matrix: SparseLaplacian, ground: usize) -> Result<Self> {
        let n = matrix.dim();
        if ground >= n || n < 2 {
            return Err(Error::Solver(format!("cannot ground vertex {ground} of {n}")));
        }
        let backend = if n - 1 <= DIRECT_SOLVE_LIMIT {
            let reduced = reduced_matrix(&matrix, ground);
            let ldl = Ldl::new()
                .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                .check_symmetry(SymmetryCheck::DontCheckSymmetry)
                .numeric(reduced.view())
                .map_err(|e| Error::Solver(format!("factorization failed: {e}")))?;
            if ldl.d().iter().any(|d| *d == 0.0 || !d.is_finite()) {
                return Err(Error::Solver("zero pivot in grounded Laplacian".into()));
            }
            Backend::Direct(Box::new(ldl))
        } else {
            Backend::Iterative
        };
        Ok(GroundedSolver { matrix, ground, backend })
    }

    pub fn matrix(&self) -> &SparseLaplacian {
        &self.matrix
    }

    /// Solve `L x = rhs` on every row except the grounded one.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let g = self.ground;
        match &self.backend {
            Backend::Direct(ldl) => {
                let b: Vec<f64> = rhs
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != g)
                    .map(|(_, v)| *v)
                    .collect();
                let y: Vec<f64> = ldl.solve(&b);
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Solver("non-finite solution".into()));
                }
                let mut x = Vec::with_capacity(rhs.len());
                x.extend_from_slice(&y[..g]);
                x.push(0.0);
                x.extend_from_slice(&y[g..]);
                Ok(x)
            }
            Backend::Iterative => jacobi_pcg(&self.matrix, g, rhs),
        }
    }
}

fn reduced_matrix(l: &SparseLaplacian, ground: usize) -> CsMat<f64> {
    let n = l.dim();
    let shift = |k: usize| if k > ground { k - 1 } else { k };
    let mut indptr = Vec::with_capacity(n);
    let mut indices = Vec::with_capacity(l.nnz());
    let mut data = Vec::with_capacity(l.nnz());
    indptr.push(0);
    for i in (0..n).filter(|&i| i != ground) {
        for (j, v) in l.row(i) {
            if j != ground {
                indices.push(shift(j));
                data.push(v);
            }
        }
        indptr.push(indices.len());
    }
    CsMat::new((n - 1, n - 1), indptr, indices, data)
}

/// Conjugate gradients with diagonal preconditioning on the grounded system.
fn jacobi_pcg(l: &SparseLaplacian, ground: usize, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = l.dim();
    let mask = |v: &mut Vec<f64>| v[ground] = 0.0;
    let diag: Vec<f64> = (0..n).map(|i| l.get(i, i)).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    mask(&mut r);
    let bnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(&diag).map(|(a, d)| a / d).collect() };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..10 * n {
        let mut ap = l.mul(&p);
        mask(&mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Solver("grounded Laplacian is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= CG_TOL * bnorm {
            return Ok(x);
        }
        z = precond(&r);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver("conjugate gradients did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusShape;

    fn grid_laplacian() -> SparseLaplacian {
        let (s, _) = SimplicialSurface::torus_grid(&TorusShape::default(), 12, 10).unwrap();
        let w = s.cotangent_weights();
        SparseLaplacian::from_edge_weights(&s, &w)
    }

    #[test]
    fn symmetric_with_zero_row_sums() {
        let l = grid_laplacian();
        for i in 0..l.dim() {
            let mut sum = 0.0;
            let mut max: f64 = 0.0;
            for (j, v) in l.row(i) {
                assert_eq!(v, l.get(j, i));
                sum += v;
                max = max.max(v.abs());
            }
            assert!(sum.abs() < 1e-10 * max);
        }
    }

    #[test]
    fn direct_and_iterative_solves_agree() {
        let l = grid_laplacian();
        let n = l.dim();
        let mut b: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let direct = l.grounded(3).unwrap().solve(&b).unwrap();
        let iter = jacobi_pcg(&l, 3, &b).unwrap();
        assert_eq!(direct[3], 0.0);
        for (a, c) in direct.iter().zip(&iter) {
            assert!((a - c).abs() < 1e-8);
        }
        let r = l.mul(&direct);
        let res = r.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(res < 1e-10, "residual {res}");
    }
}
