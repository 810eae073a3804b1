//! Compressed-row symmetric matrices built from per-edge weights, and the
//! zero-mean linear solve used by the Newton iteration.

use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Graph Laplacian `sum_ij w_ij (e_i - e_j)(e_i - e_j)^T` over the given edges.
    ///
    /// Off-diagonal entries are `-w_ij`; diagonal entries are `sum_k w_ik`.
    pub fn from_edge_weights(n: usize, edges: &[[usize; 2]], weights: &[f64]) -> Self {
        debug_assert_eq!(edges.len(), weights.len());
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for (&[i, j], &w) in edges.iter().zip(weights) {
            rows[i].push((j, -w));
            rows[j].push((i, -w));
            diag[i] += w;
            diag[j] += w;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.push((i, diag[i]));
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Nonzeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest absolute asymmetry `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Solves `A x = b` for a Laplacian-structured matrix on the zero-mean subspace.
    ///
    /// The right-hand side is projected to zero mean, vertex 0 is pinned to
    /// remove the constant null vector, and the solution is re-projected to
    /// zero mean. Cholesky is tried first, LU is the fallback for indefinite
    /// systems. One step of iterative refinement is applied when the relative
    /// residual exceeds `1e-10`.
    pub fn solve_zero_mean(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if n == 0 {
            return Ok(Vec::new());
        }
        if n == 1 {
            return Ok(vec![0.0]);
        }
        let mean_b = b.iter().sum::<f64>() / n as f64;
        let rhs: Vec<f64> = b.iter().map(|v| v - mean_b).collect();

        let m = n - 1;
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 1..n {
            for (j, v) in self.row(i) {
                if j > 0 {
                    triplets.push(Triplet::new(i - 1, j - 1, v));
                }
            }
        }
        let reduced = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;

        enum Factor {
            Llt(faer::sparse::linalg::solvers::Llt<usize, f64>),
            Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
        }
        let factor = match reduced.sp_cholesky(Side::Lower) {
            Ok(llt) => Factor::Llt(llt),
            Err(_) => Factor::Lu(
                reduced
                    .sp_lu()
                    .map_err(|e| Error::LinearSolve(format!("{e:?}")))?,
            ),
        };
        let solve = |r: &[f64]| -> Vec<f64> {
            let mut x = Mat::<f64>::from_fn(m, 1, |i, _| r[i + 1]);
            match &factor {
                Factor::Llt(f) => f.solve_in_place(x.as_mut()),
                Factor::Lu(f) => f.solve_in_place(x.as_mut()),
            }
            let mut full = Vec::with_capacity(n);
            full.push(0.0);
            full.extend((0..m).map(|i| x[(i, 0)]));
            full
        };

        let mut x = solve(&rhs);
        let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = |x: &[f64]| -> Vec<f64> {
            let ax = self.mul_vec(x);
            rhs.iter().zip(ax).map(|(r, a)| r - a).collect()
        };
        let r = residual(&x);
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_b > 0.0 && norm_r > 1e-10 * norm_b {
            let dx = solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        let mean_x = x.iter().sum::<f64>() / n as f64;
        for v in &mut x {
            *v -= mean_x;
        }
        Ok(x)
    }
}
