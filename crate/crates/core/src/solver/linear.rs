//! Sparse direct solves through faer's supernodal LU with a cached symbolic
//! factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Mat;

use crate::assembly::{BlockPattern, CsrMatrix};
use crate::{Error, Real, Result};

/// Relative residual `|A x - b| / |b|` above which a solve is rejected.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// LU solver bound to one structurally symmetric sparsity pattern.
///
/// The matrix is scaled by row and column maxima before factorization and
/// the solution is polished by iterative refinement until the relative
/// residual drops below [`SOLVE_TOLERANCE`].
pub struct SparseLu {
    n: usize,
    structure: SymbolicSparseColMat<usize>,
    /// `csc_to_csr[k]` is the CSR storage index of the k-th CSC entry.
    csc_to_csr: Vec<usize>,
    symbolic: Option<SymbolicLu<usize>>,
    last_residual: f64,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).field("nnz", &self.csc_to_csr.len()).finish()
    }
}

impl SparseLu {
    pub fn new(pattern: &BlockPattern) -> Result<Self> {
        if !pattern.is_symmetric() {
            return Err(Error::contract("sparse LU expects a structurally symmetric pattern"));
        }
        Self::from_csr_structure(pattern.dim(), &pattern.row_ptr, &pattern.col_idx)
    }

    /// Builds the solver for a scalar or blocked CSR matrix whose pattern is
    /// structurally symmetric.
    pub fn for_matrix<T: Real>(a: &CsrMatrix<T>) -> Result<Self> {
        Self::from_csr_structure(a.n, &a.row_ptr, &a.col_idx)
    }

    fn from_csr_structure(n: usize, row_ptr: &[usize], col_idx: &[usize]) -> Result<Self> {
        // With a symmetric structure the CSC column pointers and row indices
        // coincide with the CSR row pointers and column indices.
        let mut csc_to_csr = Vec::with_capacity(col_idx.len());
        for j in 0..n {
            for &i in &col_idx[row_ptr[j]..row_ptr[j + 1]] {
                let (s, e) = (row_ptr[i], row_ptr[i + 1]);
                let k = col_idx[s..e]
                    .binary_search(&j)
                    .map_err(|_| Error::contract("sparsity pattern is not structurally symmetric"))?;
                csc_to_csr.push(s + k);
            }
        }
        let structure = SymbolicSparseColMat::new_checked(n, n, row_ptr.to_vec(), None, col_idx.to_vec());
        Ok(Self { n, structure, csc_to_csr, symbolic: None, last_residual: 0.0 })
    }

    /// Relative residual of the most recent solve.
    pub fn last_residual(&self) -> f64 {
        self.last_residual
    }

    /// Solves `A x = b`.
    pub fn solve<T: Real>(&mut self, a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if a.n != n || b.len() != n || a.values.len() != self.csc_to_csr.len() {
            return Err(Error::contract("matrix does not match the factorized pattern"));
        }
        let vals: Vec<f64> = a.values.iter().map(|v| v.as_f64()).collect();
        let rhs: Vec<f64> = b.iter().map(|v| v.as_f64()).collect();
        if vals.iter().chain(&rhs).any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite matrix or right-hand side".into()));
        }

        let mut rs = vec![0.0f64; n];
        for (r, s) in rs.iter_mut().enumerate() {
            let m = vals[a.row_ptr[r]..a.row_ptr[r + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                return Err(Error::LinearSolve(format!("row {r} is identically zero")));
            }
            *s = 1.0 / m;
        }
        let mut cs = vec![0.0f64; n];
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.col_idx[k];
                cs[c] = cs[c].max((vals[k] * rs[r]).abs());
            }
        }
        for (c, s) in cs.iter_mut().enumerate() {
            if *s == 0.0 {
                return Err(Error::LinearSolve(format!("column {c} is identically zero")));
            }
            *s = 1.0 / *s;
        }

        let mut scaled = vec![0.0f64; vals.len()];
        for j in 0..n {
            for k in a.row_ptr[j]..a.row_ptr[j + 1] {
                let i = a.col_idx[k];
                let src = self.csc_to_csr[k];
                scaled[k] = vals[src] * rs[i] * cs[j];
            }
        }
        let mat = SparseColMatRef::new(self.structure.as_ref(), &scaled);
        if self.symbolic.is_none() {
            let sym = SymbolicLu::try_new(self.structure.as_ref())
                .map_err(|e| Error::LinearSolve(format!("symbolic factorization failed: {e:?}")))?;
            self.symbolic = Some(sym);
        }
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone().expect("set above"), mat)
            .map_err(|e| Error::LinearSolve(format!("numeric factorization failed: {e:?}")))?;

        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0f64; n];
        if bnorm == 0.0 {
            self.last_residual = 0.0;
            return Ok(vec![T::zero(); n]);
        }
        let mut res = rhs.clone();
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let col = Mat::from_fn(n, 1, |i, _| res[i] * rs[i]);
            let y = lu.solve(&col);
            for i in 0..n {
                x[i] += y[(i, 0)] * cs[i];
            }
            for r in 0..n {
                let ax: f64 = (a.row_ptr[r]..a.row_ptr[r + 1]).map(|k| vals[k] * x[a.col_idx[k]]).sum();
                res[r] = rhs[r] - ax;
            }
            let new_rel = res.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
            if !new_rel.is_finite() {
                return Err(Error::LinearSolve("factorization produced non-finite values".into()));
            }
            let stalled = new_rel > 0.5 * rel;
            rel = new_rel;
            if rel < SOLVE_TOLERANCE || stalled {
                break;
            }
        }
        self.last_residual = rel;
        if rel >= SOLVE_TOLERANCE.sqrt() {
            return Err(Error::LinearSolve(format!("relative residual {rel:e} after refinement; matrix is numerically singular")));
        }
        if rel >= SOLVE_TOLERANCE {
            log::warn!("linear solve reached relative residual {rel:e}");
        }
        Ok(x.into_iter().map(T::lit).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_blocked_system() {
        let cliques = [vec![0usize, 1], vec![1, 2]];
        let p = BlockPattern::from_cliques(3, 2, cliques.iter().map(|c| c.as_slice()));
        let mut a = CsrMatrix::<f64>::zeros(&p);
        for r in 0..6 {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.col_idx[k];
                a.values[k] = if r == c { 4.0 + r as f64 } else { 1.0 / (1.0 + (r + 2 * c) as f64) };
            }
        }
        let x_true: Vec<f64> = (0..6).map(|i| (i as f64) - 2.5).collect();
        let b = a.matvec(&x_true);
        let mut lu = SparseLu::new(&p).unwrap();
        let x = lu.solve(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
        // Reuse of the symbolic factorization with new values.
        a.values.iter_mut().for_each(|v| *v *= 3.0);
        let x = lu.solve(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((3.0 * u - v).abs() < 1e-12);
        }
        assert!(lu.last_residual() < SOLVE_TOLERANCE);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let cliques = [vec![0usize, 1]];
        let p = BlockPattern::from_cliques(2, 1, cliques.iter().map(|c| c.as_slice()));
        let mut a = CsrMatrix::<f64>::zeros(&p);
        a.values = vec![1.0, 1.0, 1.0, 1.0];
        let mut lu = SparseLu::new(&p).unwrap();
        assert!(lu.solve(&a, &[1.0, 2.0]).is_err());
    }
}
