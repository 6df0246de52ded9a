//! Left-looking sparse LU with partial pivoting.
//!
//! Columns are processed in an approximate-minimum-degree order computed on
//! the pattern of `A + A^T`. Each column is obtained by a sparse triangular
//! solve against the columns of `L` computed so far (Gilbert-Peierls), with
//! the nonzero pattern found by a depth-first search. Pivoting is threshold
//! partial pivoting that keeps the diagonal of the symmetric ordering when it
//! is within `pivot_threshold` of the column maximum, which keeps fill close
//! to the symmetric prediction on saddle-point matrices.
//!
//! The factorization satisfies `P A Q = L U` with `L` unit lower triangular.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::amd;
use faer::sparse::SymbolicSparseColMatRef;

use super::SolveError;
use crate::sparse::CscMatrix;

const NONE: usize = usize::MAX;

/// Threshold used when preferring the diagonal entry as pivot.
pub const DEFAULT_PIVOT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SparseFactorization {
    n: usize,
    /// column order: step k factors original column `col_perm[k]`
    col_perm: Vec<usize>,
    /// `row_step[i]` is the elimination step at which original row i was pivotal
    row_step: Vec<usize>,
    // strictly lower part of L, row indices in step numbering
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // strictly upper part of U, row indices in step numbering
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
}

/// Computes the fill-reducing column order for `m` (pattern of `A + A^T`).
fn amd_order(m: &CscMatrix) -> Result<Vec<usize>, SolveError> {
    let n = m.cols();
    if n == 0 {
        return Ok(Vec::new());
    }
    let sym = SymbolicSparseColMatRef::new_checked(n, n, m.col_ptr(), None, m.row_idx());
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut mem = MemBuffer::new(amd::order_scratch::<usize>(n, m.nnz()));
    amd::order(
        &mut perm,
        &mut perm_inv,
        sym,
        amd::Control::default(),
        MemStack::new(&mut mem),
    )
    .map_err(|e| SolveError::Ordering(format!("{e:?}")))?;
    Ok(perm)
}

/// Factorizes a square sparse matrix.
pub fn factor_sparse(m: &CscMatrix) -> Result<SparseFactorization, SolveError> {
    SparseFactorization::new(m, DEFAULT_PIVOT_THRESHOLD)
}

impl SparseFactorization {
    pub fn new(m: &CscMatrix, pivot_threshold: f64) -> Result<Self, SolveError> {
        if m.rows() != m.cols() {
            return Err(SolveError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let n = m.cols();
        let col_perm = amd_order(m)?;
        let tiny = f64::EPSILON * m.max_abs();

        let mut row_step = vec![NONE; n];
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx: Vec<usize> = Vec::with_capacity(2 * m.nnz());
        let mut l_val: Vec<f64> = Vec::with_capacity(2 * m.nnz());
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx: Vec<usize> = Vec::with_capacity(2 * m.nnz());
        let mut u_val: Vec<f64> = Vec::with_capacity(2 * m.nnz());
        let mut u_diag = vec![0.0; n];
        l_ptr.push(0);
        u_ptr.push(0);

        // dense work column, DFS bookkeeping
        let mut x = vec![0.0; n];
        let mut mark = vec![NONE; n];
        let mut pattern: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(n);

        for k in 0..n {
            let col = col_perm[k];

            // Reach of the column pattern in the graph of L (rows already pivoted
            // have edges to the rows of their L column). `pattern` ends up in
            // reverse topological order.
            pattern.clear();
            for (i, _) in m.col(col) {
                if mark[i] == k {
                    continue;
                }
                mark[i] = k;
                stack.push((i, 0));
                while let Some(&(node, pos)) = stack.last() {
                    let step = row_step[node];
                    let mut child_found = None;
                    let mut next = pos;
                    if step != NONE {
                        let (lo, hi) = (l_ptr[step], l_ptr[step + 1]);
                        while lo + next < hi {
                            // l_idx still holds original row numbers during factorization
                            let child = l_idx[lo + next];
                            next += 1;
                            if mark[child] != k {
                                child_found = Some(child);
                                break;
                            }
                        }
                    }
                    match child_found {
                        Some(child) => {
                            stack.last_mut().unwrap().1 = next;
                            mark[child] = k;
                            stack.push((child, 0));
                        }
                        None => {
                            pattern.push(node);
                            stack.pop();
                        }
                    }
                }
            }

            for (i, v) in m.col(col) {
                x[i] = v;
            }
            // dependencies first: iterate the postorder in reverse
            for &j in pattern.iter().rev() {
                let step = row_step[j];
                if step == NONE {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                for p in l_ptr[step]..l_ptr[step + 1] {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }

            let mut pivot_row = NONE;
            let mut amax = -1.0f64;
            for &j in &pattern {
                let step = row_step[j];
                if step == NONE {
                    let a = x[j].abs();
                    if a > amax {
                        amax = a;
                        pivot_row = j;
                    }
                } else {
                    u_idx.push(step);
                    u_val.push(x[j]);
                }
            }
            if pivot_row == NONE || amax <= tiny {
                return Err(SolveError::SingularMatrix { pivot: k });
            }
            if row_step[col] == NONE && mark[col] == k && x[col].abs() >= pivot_threshold * amax {
                pivot_row = col;
            }
            let pivot = x[pivot_row];
            u_diag[k] = pivot;
            row_step[pivot_row] = k;
            u_ptr.push(u_idx.len());

            for &j in &pattern {
                if row_step[j] == NONE {
                    let v = x[j] / pivot;
                    if v != 0.0 {
                        l_idx.push(j);
                        l_val.push(v);
                    }
                }
                x[j] = 0.0;
            }
            l_ptr.push(l_idx.len());
        }

        // L row indices to step numbering
        for r in l_idx.iter_mut() {
            *r = row_step[*r];
        }

        Ok(Self {
            n,
            col_perm,
            row_step,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            u_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L` and `U`, counting the diagonal once.
    pub fn fill_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.solve_into(b, &mut y);
        y
    }

    /// Solves `A x = b` writing into `out`.
    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        assert_eq!(b.len(), self.n, "rhs dimension");
        let n = self.n;
        let mut y = vec![0.0; n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.row_step[i]] = bi;
        }
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let yk = y[k] / self.u_diag[k];
            y[k] = yk;
            if yk != 0.0 {
                for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                    y[self.u_idx[p]] -= self.u_val[p] * yk;
                }
            }
        }
        for k in 0..n {
            out[self.col_perm[k]] = y[k];
        }
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs dimension");
        let n = self.n;
        let mut w: Vec<f64> = (0..n).map(|k| b[self.col_perm[k]]).collect();
        for k in 0..n {
            let mut acc = w[k];
            for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                acc -= self.u_val[p] * w[self.u_idx[p]];
            }
            w[k] = acc / self.u_diag[k];
        }
        for k in (0..n).rev() {
            let mut acc = w[k];
            for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                acc -= self.l_val[p] * w[self.l_idx[p]];
            }
            w[k] = acc;
        }
        (0..n).map(|i| w[self.row_step[i]]).collect()
    }
}
