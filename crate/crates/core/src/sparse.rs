//! Symmetric sparse matrices in compressed-row form.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Both triangles of the pattern are stored, so products need no transposes.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

const PAR_ROWS: usize = 16_384;

impl SparseSymMatrix {
    /// Sums duplicate entries; the result is identical for any permutation of
    /// equal-key triplets that keeps their relative order.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = trips.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::LinAlg(format!("entry ({i}, {j}) outside a {n}×{n} matrix")));
        }
        trips.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: d.to_vec() }
    }

    /// Dense row-major input; entries below `1e-300` in magnitude are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut trips = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::LinAlg("dense input is not square".into()));
            }
            for (j, &v) in r.iter().enumerate() {
                if v.abs() > 1e-300 {
                    trips.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, trips)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij − A_ji|`.
    pub fn symmetry_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                e = e.max((v - self.get(*j, i)).abs());
            }
        }
        e
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(j, v)| v * x[*j]).sum()
    }

    /// `y = A x`; rows are independent so the parallel path is bit-identical.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self + a·other` on the union pattern.
    pub fn add_scaled(&self, other: &Self, a: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::LinAlg(format!("dimension mismatch {} vs {}", self.n, other.n)));
        }
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(usize::MAX);
                let jb = cb.get(q).copied().unwrap_or(usize::MAX);
                if ja == jb {
                    col_idx.push(ja);
                    values.push(va[p] + a * vb[q]);
                    p += 1;
                    q += 1;
                } else if ja < jb {
                    col_idx.push(ja);
                    values.push(va[p]);
                    p += 1;
                } else {
                    col_idx.push(jb);
                    values.push(a * vb[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n: self.n, row_ptr, col_idx, values })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                row[*j] = *v;
            }
        }
        d
    }

    /// Coordinate text dump, one `row col value` line per stored entry (1-based).
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                s.push_str(&format!("{} {} {:.17e}\n", i + 1, j + 1, v));
            }
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reduced numbering of the free (non-Dirichlet) vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub free: Vec<usize>,
    pub index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut index = vec![None; mesh.n_vertices()];
        let mut free = Vec::with_capacity(mesh.n_free());
        for (v, m) in mesh.dirichlet_mask.iter().enumerate() {
            if !m {
                index[v] = Some(free.len());
                free.push(v);
            }
        }
        Self { free, index }
    }

    /// Every vertex is an unknown.
    pub fn all(n: usize) -> Self {
        Self { free: (0..n).collect(), index: (0..n).map(Some).collect() }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Extends a reduced vector by zeros on the Dirichlet vertices.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.index.len()];
        for (k, &v) in self.free.iter().enumerate() {
            full[v] = u[k];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_multiply() {
        let a = SparseSymMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 1, 2.0), (0, 0, 1.0), (1, 1, 8.0)])
            .unwrap();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![4.0, 10.0]);
        assert_eq!(a.symmetry_error(), 0.0);
        let b = a.add_scaled(&SparseSymMatrix::identity(2), -2.0).unwrap();
        assert_eq!(b.diagonal(), vec![0.0, 6.0]);
        assert!(SparseSymMatrix::from_triplets(2, vec![(2, 0, 1.0)]).is_err());
        assert_eq!(a.to_coordinate_text().lines().count(), 4);
    }
}
