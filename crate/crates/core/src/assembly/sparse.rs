//! Block sparsity pattern and compressed-row matrices.

use crate::Real;

/// Sparsity of the blocked system.
///
/// Every field block shares one scalar pattern over the active functions, and
/// all 25 field-field blocks are present, so the full pattern is symmetric.
/// Row `f * n + a` lists, for each field `g` in order, the columns
/// `g * n + scalar_cols(a)`; the columns of a row are therefore sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPattern {
    pub fields: usize,
    pub n: usize,
    pub scalar_ptr: Vec<usize>,
    pub scalar_cols: Vec<usize>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl BlockPattern {
    /// Builds the pattern from cliques of coupled scalar dofs.
    pub fn from_cliques<'a>(n: usize, fields: usize, cliques: impl Iterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in cliques {
            for &a in c {
                rows[a].extend_from_slice(c);
            }
        }
        let mut scalar_ptr = Vec::with_capacity(n + 1);
        let mut scalar_cols = Vec::new();
        scalar_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            scalar_cols.extend_from_slice(r);
            scalar_ptr.push(scalar_cols.len());
        }
        let mut row_ptr = Vec::with_capacity(n * fields + 1);
        let mut col_idx = Vec::with_capacity(scalar_cols.len() * fields * fields);
        row_ptr.push(0);
        for _f in 0..fields {
            for a in 0..n {
                let cols = &scalar_cols[scalar_ptr[a]..scalar_ptr[a + 1]];
                for g in 0..fields {
                    col_idx.extend(cols.iter().map(|&c| g * n + c));
                }
                row_ptr.push(col_idx.len());
            }
        }
        Self { fields, n, scalar_ptr, scalar_cols, row_ptr, col_idx }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n * self.fields
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    fn scalar_row_len(&self, a: usize) -> usize {
        self.scalar_ptr[a + 1] - self.scalar_ptr[a]
    }

    /// Position of scalar column `b` within scalar row `a`.
    pub fn scalar_position(&self, a: usize, b: usize) -> Option<usize> {
        self.scalar_cols[self.scalar_ptr[a]..self.scalar_ptr[a + 1]].binary_search(&b).ok()
    }

    /// Storage index of entry `(f * n + a, g * n + b)` given the scalar position of `b` in row `a`.
    #[inline]
    pub fn block_index(&self, f: usize, a: usize, g: usize, spos: usize) -> usize {
        self.row_ptr[f * self.n + a] + g * self.scalar_row_len(a) + spos
    }

    /// Storage index of a global entry, if it is in the pattern.
    pub fn index(&self, row: usize, col: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[s..e].binary_search(&col).ok().map(|k| s + k)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim()).all(|r| {
            self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]].iter().all(|&c| self.index(c, r).is_some())
        })
    }
}

/// Square matrix in compressed sparse row form sharing a [`BlockPattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(pattern: &BlockPattern) -> Self {
        Self {
            n: pattern.dim(),
            row_ptr: pattern.row_ptr.clone(),
            col_idx: pattern.col_idx.clone(),
            values: vec![T::zero(); pattern.nnz()],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let (s, e) = (self.row_ptr[row], self.row_ptr[row + 1]);
        match self.col_idx[s..e].binary_search(&col) {
            Ok(k) => self.values[s + k],
            Err(_) => T::zero(),
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Dense copy (tests and diagnostics on small systems).
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_from_cliques() {
        let cliques = [vec![0usize, 1], vec![1, 2]];
        let p = BlockPattern::from_cliques(3, 2, cliques.iter().map(|c| c.as_slice()));
        assert_eq!(p.scalar_cols, vec![0, 1, 0, 1, 2, 1, 2]);
        assert_eq!(p.dim(), 6);
        assert_eq!(p.nnz(), 7 * 4);
        assert!(p.is_symmetric());
        let pos = p.scalar_position(1, 2).unwrap();
        let k = p.block_index(1, 1, 0, pos);
        assert_eq!(p.col_idx[k], 2);
        assert_eq!(p.index(4, 2), Some(k));
        assert_eq!(p.index(0, 2), None);
    }

    #[test]
    fn matvec_identity_like() {
        let cliques = [vec![0usize], vec![1]];
        let p = BlockPattern::from_cliques(2, 1, cliques.iter().map(|c| c.as_slice()));
        let mut m = CsrMatrix::<f64>::zeros(&p);
        m.values = vec![2.0, 3.0];
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![2.0, 3.0]);
        assert_eq!(m.get(0, 1), 0.0);
    }
}
