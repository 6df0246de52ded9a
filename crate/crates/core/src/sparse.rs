//! Sparse matrix containers: triplet assembly and compressed sparse column storage.
//!
//! Every Jacobian, Gauss-Newton block and KKT matrix in the crate is a
//! [`CscMatrix`]. Assembly code pushes `(row, col, value)` triplets into a
//! [`TripletMatrix`]; duplicates are summed on conversion, which is what
//! element-wise assembly wants.

use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::dense::DenseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("triplet #{entry} at ({row}, {col}) is outside a {rows}x{cols} matrix")]
    IndexOutOfBounds {
        entry: usize,
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("dimension mismatch in {op}: expected {expected}, got {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("matrix market parse error on line {line}: {msg}")]
    MatrixMarket { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SparseError {
    fn from(e: std::io::Error) -> Self {
        SparseError::Io(e.to_string())
    }
}

fn mismatch(
    op: &'static str,
    expected: impl fmt::Display,
    found: impl fmt::Display,
) -> SparseError {
    SparseError::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Coordinate-format assembly buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(rows: usize, cols: usize, cap: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        Self {
            rows,
            cols,
            entries,
        }
    }

    /// Appends an entry. Bounds are checked when converting to CSC.
    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Adds a dense block with its top-left corner at `(row0, col0)`.
    pub fn push_block(&mut self, row0: usize, col0: usize, block: &DenseMatrix) {
        for j in 0..block.cols() {
            for i in 0..block.rows() {
                let v = block[(i, j)];
                if v != 0.0 {
                    self.push(row0 + i, col0 + j, v);
                }
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `y = self * v` straight from the triplets (duplicates contribute additively).
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        if v.len() != self.cols {
            return Err(mismatch("triplet matvec", self.cols, v.len()));
        }
        let mut y = vec![0.0; self.rows];
        for &(i, j, a) in &self.entries {
            y[i] += a * v[j];
        }
        Ok(y)
    }

    pub fn to_csc(&self) -> Result<CscMatrix, SparseError> {
        csc_from_triplets(self)
    }
}

/// Compressed sparse column matrix. Row indices are sorted and unique per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Converts triplets to CSC, summing duplicate `(row, col)` pairs.
pub fn csc_from_triplets(t: &TripletMatrix) -> Result<CscMatrix, SparseError> {
    let (rows, cols) = (t.rows, t.cols);
    for (entry, &(row, col, _)) in t.entries.iter().enumerate() {
        if row >= rows || col >= cols {
            return Err(SparseError::IndexOutOfBounds {
                entry,
                row,
                col,
                rows,
                cols,
            });
        }
    }

    // Counting sort by column, then by row within each column.
    let mut counts = vec![0usize; cols + 1];
    for &(_, c, _) in &t.entries {
        counts[c + 1] += 1;
    }
    for j in 0..cols {
        counts[j + 1] += counts[j];
    }
    let mut next = counts.clone();
    let mut rows_tmp = vec![0usize; t.entries.len()];
    let mut vals_tmp = vec![0.0; t.entries.len()];
    for &(r, c, v) in &t.entries {
        let k = next[c];
        rows_tmp[k] = r;
        vals_tmp[k] = v;
        next[c] += 1;
    }

    let mut col_ptr = Vec::with_capacity(cols + 1);
    let mut row_idx = Vec::with_capacity(t.entries.len());
    let mut values = Vec::with_capacity(t.entries.len());
    // `marker[r]` holds the output slot of row r in the current column.
    let mut marker = vec![usize::MAX; rows];
    col_ptr.push(0);
    for j in 0..cols {
        let start = row_idx.len();
        for k in counts[j]..counts[j + 1] {
            let r = rows_tmp[k];
            if marker[r] != usize::MAX && marker[r] >= start {
                values[marker[r]] += vals_tmp[k];
            } else {
                marker[r] = row_idx.len();
                row_idx.push(r);
                values.push(vals_tmp[k]);
            }
        }
        // sort the column segment by row
        let seg = start..row_idx.len();
        if seg.len() > 1 {
            let mut pairs: Vec<(usize, f64)> = row_idx[seg.clone()]
                .iter()
                .copied()
                .zip(values[seg.clone()].iter().copied())
                .collect();
            pairs.sort_unstable_by_key(|p| p.0);
            for (o, (r, v)) in pairs.into_iter().enumerate() {
                row_idx[start + o] = r;
                values[start + o] = v;
            }
        }
        col_ptr.push(row_idx.len());
    }
    Ok(CscMatrix {
        rows,
        cols,
        col_ptr,
        row_idx,
        values,
    })
}

impl CscMatrix {
    /// Builds a matrix from raw CSC arrays, validating the structural invariants.
    pub fn from_raw(
        rows: usize,
        cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if col_ptr.len() != cols + 1 || col_ptr[0] != 0 {
            return Err(mismatch("csc col_ptr", cols + 1, col_ptr.len()));
        }
        if row_idx.len() != values.len() || *col_ptr.last().unwrap() != row_idx.len() {
            return Err(mismatch("csc nnz", col_ptr[cols], row_idx.len()));
        }
        for j in 0..cols {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(mismatch("csc col_ptr monotone", col_ptr[j], col_ptr[j + 1]));
            }
            let seg = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (k, &r) in seg.iter().enumerate() {
                if r >= rows {
                    return Err(SparseError::IndexOutOfBounds {
                        entry: col_ptr[j] + k,
                        row: r,
                        col: j,
                        rows,
                        cols,
                    });
                }
                if k > 0 && seg[k - 1] >= r {
                    return Err(mismatch("csc sorted rows", seg[k - 1], r));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            col_ptr: vec![0; cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            rows: n,
            cols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Sparse copy of a dense matrix, dropping exact zeros.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut t = TripletMatrix::new(d.rows(), d.cols());
        t.push_block(0, 0, d);
        csc_from_triplets(&t).expect("dense block indices are in bounds")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_ptr[self.cols]
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates `(row, value)` of column `j`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| self.col(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let seg = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[seg.clone()].binary_search(&row) {
            Ok(k) => self.values[seg.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_triplets(&self) -> TripletMatrix {
        TripletMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.iter().collect(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.iter() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.rows + 1];
        for &r in &self.row_idx[..self.nnz()] {
            counts[r + 1] += 1;
        }
        for i in 0..self.rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // columns visited in order, so the output rows come out sorted
        for j in 0..self.cols {
            for (i, v) in self.col(j) {
                let k = next[i];
                row_idx[k] = j;
                values[k] = v;
                next[i] += 1;
            }
        }
        CscMatrix {
            rows: self.cols,
            cols: self.rows,
            col_ptr: counts,
            row_idx,
            values,
        }
    }

    /// `y += alpha * self * v` without dimension checks.
    pub(crate) fn mul_add_into(&self, alpha: f64, v: &[f64], y: &mut [f64]) {
        for (j, &vj) in v.iter().enumerate().take(self.cols) {
            if vj == 0.0 {
                continue;
            }
            let s = alpha * vj;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * s;
            }
        }
    }

    /// `y += alpha * self^T * v` without dimension checks.
    pub(crate) fn mul_transpose_add_into(&self, alpha: f64, v: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate().take(self.cols) {
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.values[k] * v[self.row_idx[k]];
            }
            *yj += alpha * acc;
        }
    }

    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        spmv(self, v)
    }

    pub fn spmv_transpose(&self, v: &[f64]) -> Result<Vec<f64>, SparseError> {
        spmv_transpose(self, v)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &CscMatrix) -> Result<CscMatrix, SparseError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(mismatch(
                "sparse add",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut t = TripletMatrix::with_capacity(self.rows, self.cols, self.nnz() + other.nnz());
        t.entries.extend(self.iter());
        t.entries
            .extend(other.iter().map(|(i, j, v)| (i, j, alpha * v)));
        csc_from_triplets(&t)
    }

    /// Adds `diag[i]` to entry `(i, i)`, inserting structural entries as needed.
    pub fn add_diagonal(&self, diag: &[f64]) -> Result<CscMatrix, SparseError> {
        if self.rows != self.cols || diag.len() != self.rows {
            return Err(mismatch("add_diagonal", self.rows, diag.len()));
        }
        self.add_scaled(1.0, &CscMatrix::from_diagonal(diag))
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Sparse product `self * other` (Gustavson's column-wise algorithm).
    pub fn matmul(&self, other: &CscMatrix) -> Result<CscMatrix, SparseError> {
        if self.cols != other.rows {
            return Err(mismatch("sparse matmul", self.cols, other.rows));
        }
        let mut col_ptr = Vec::with_capacity(other.cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut work = vec![0.0; self.rows];
        let mut mark = vec![usize::MAX; self.rows];
        let mut pattern = Vec::new();
        col_ptr.push(0);
        for j in 0..other.cols {
            pattern.clear();
            for (k, b) in other.col(j) {
                for (i, a) in self.col(k) {
                    if mark[i] != j {
                        mark[i] = j;
                        pattern.push(i);
                        work[i] = 0.0;
                    }
                    work[i] += a * b;
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                row_idx.push(i);
                values.push(work[i]);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(CscMatrix {
            rows: self.rows,
            cols: other.cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// `self^T * diag(w) * other`, the weighted normal-equation product.
    pub fn transpose_weighted_mul(
        &self,
        w: &[f64],
        other: &CscMatrix,
    ) -> Result<CscMatrix, SparseError> {
        if w.len() != self.rows || other.rows != self.rows {
            return Err(mismatch("weighted normal product", self.rows, other.rows));
        }
        let mut wt = self.transpose();
        // columns of self^T correspond to rows of self
        for j in 0..wt.cols {
            for k in wt.col_ptr[j]..wt.col_ptr[j + 1] {
                wt.values[k] *= w[j];
            }
        }
        wt.matmul(other)
    }

    /// Dense product `self * d`.
    pub fn mul_dense(&self, d: &DenseMatrix) -> Result<DenseMatrix, SparseError> {
        if self.cols != d.rows() {
            return Err(mismatch("sparse x dense", self.cols, d.rows()));
        }
        let mut out = DenseMatrix::zeros(self.rows, d.cols());
        for c in 0..d.cols() {
            let src = d.col(c);
            let dst = out.col_mut(c);
            self.mul_add_into(1.0, src, dst);
        }
        Ok(out)
    }

    /// Maximum absolute difference between `self` and its transpose.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let diff = self.add_scaled(-1.0, &t).expect("square");
        diff.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Writes MatrixMarket coordinate format with 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<(), SparseError> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    /// Reads MatrixMarket coordinate format (`real general` only).
    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CscMatrix, SparseError> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => {
                return Err(SparseError::MatrixMarket {
                    line: 1,
                    msg: "empty input".into(),
                })
            }
        };
        let h = header.to_ascii_lowercase();
        if !h.starts_with("%%matrixmarket matrix coordinate real general") {
            return Err(SparseError::MatrixMarket {
                line: 1,
                msg: format!("unsupported header '{header}'"),
            });
        }
        let parse_err = |line: usize, msg: &str| SparseError::MatrixMarket {
            line: line + 1,
            msg: msg.to_string(),
        };
        let mut size: Option<(usize, usize, usize)> = None;
        let mut t = TripletMatrix::new(0, 0);
        for (n, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let mut it = line.split_whitespace();
            match size {
                None => {
                    let mut next = || -> Result<usize, SparseError> {
                        it.next()
                            .ok_or_else(|| parse_err(n, "truncated size line"))?
                            .parse()
                            .map_err(|_| parse_err(n, "bad size field"))
                    };
                    let (r, c, z) = (next()?, next()?, next()?);
                    size = Some((r, c, z));
                    t = TripletMatrix::with_capacity(r, c, z);
                }
                Some(_) => {
                    let i: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(n, "bad row index"))?;
                    let j: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(n, "bad column index"))?;
                    let v: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(n, "bad value"))?;
                    if i == 0 || j == 0 {
                        return Err(parse_err(n, "indices are 1-based"));
                    }
                    t.push(i - 1, j - 1, v);
                }
            }
        }
        let (_, _, nnz) = size.ok_or_else(|| SparseError::MatrixMarket {
            line: 1,
            msg: "missing size line".into(),
        })?;
        if t.len() != nnz {
            return Err(SparseError::MatrixMarket {
                line: 2,
                msg: format!("declared {nnz} entries, found {}", t.len()),
            });
        }
        csc_from_triplets(&t)
    }
}

pub fn spmv(m: &CscMatrix, v: &[f64]) -> Result<Vec<f64>, SparseError> {
    if v.len() != m.cols {
        return Err(mismatch("spmv", m.cols, v.len()));
    }
    let mut y = vec![0.0; m.rows];
    m.mul_add_into(1.0, v, &mut y);
    Ok(y)
}

pub fn spmv_transpose(m: &CscMatrix, v: &[f64]) -> Result<Vec<f64>, SparseError> {
    if v.len() != m.rows {
        return Err(mismatch("spmv_transpose", m.rows, v.len()));
    }
    let mut y = vec![0.0; m.cols];
    m.mul_transpose_add_into(1.0, v, &mut y);
    Ok(y)
}

/// Assembles the symmetric saddle-point matrix
///
/// ```text
/// [ A     B^T   Jx^T ]
/// [ B     C     Jp^T ]
/// [ Jx    Jp    0    ]
/// ```
///
/// where `Jx = dc/dx` (n_c x n_x, n_c = n_x) and `Jp = dc/dp` (n_c x n_p).
pub fn stack_kkt_blocks(
    a: &CscMatrix,
    b: &CscMatrix,
    c: &CscMatrix,
    dcdx: &CscMatrix,
    dcdp: &CscMatrix,
) -> Result<CscMatrix, SparseError> {
    let nx = a.rows;
    let np = c.rows;
    let shape = |m: &CscMatrix| format!("{}x{}", m.rows, m.cols);
    if a.cols != nx {
        return Err(mismatch("kkt block A", format!("{nx}x{nx}"), shape(a)));
    }
    if c.cols != np {
        return Err(mismatch("kkt block C", format!("{np}x{np}"), shape(c)));
    }
    if b.rows != np || b.cols != nx {
        return Err(mismatch("kkt block B", format!("{np}x{nx}"), shape(b)));
    }
    if dcdx.rows != nx || dcdx.cols != nx {
        return Err(mismatch(
            "kkt block dc/dx",
            format!("{nx}x{nx}"),
            shape(dcdx),
        ));
    }
    if dcdp.rows != nx || dcdp.cols != np {
        return Err(mismatch(
            "kkt block dc/dp",
            format!("{nx}x{np}"),
            shape(dcdp),
        ));
    }
    let n = 2 * nx + np;
    let (p0, l0) = (nx, nx + np);
    let mut t = TripletMatrix::with_capacity(
        n,
        n,
        a.nnz() + c.nnz() + 2 * (b.nnz() + dcdx.nnz() + dcdp.nnz()),
    );
    for (i, j, v) in a.iter() {
        t.push(i, j, v);
    }
    for (i, j, v) in b.iter() {
        t.push(p0 + i, j, v);
        t.push(j, p0 + i, v);
    }
    for (i, j, v) in c.iter() {
        t.push(p0 + i, p0 + j, v);
    }
    for (i, j, v) in dcdx.iter() {
        t.push(l0 + i, j, v);
        t.push(j, l0 + i, v);
    }
    for (i, j, v) in dcdp.iter() {
        t.push(l0 + i, p0 + j, v);
        t.push(p0 + j, l0 + i, v);
    }
    csc_from_triplets(&t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed() {
        let t = TripletMatrix::from_entries(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]);
        let m = csc_from_triplets(&t).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn empty_triplets_give_zero_matrix() {
        let m = csc_from_triplets(&TripletMatrix::new(3, 3)).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.col_ptr(), &[0, 0, 0, 0]);
    }

    #[test]
    fn out_of_bounds_names_entry() {
        let t = TripletMatrix::from_entries(2, 2, vec![(0, 0, 1.0), (2, 1, 1.0)]);
        assert_eq!(
            csc_from_triplets(&t),
            Err(SparseError::IndexOutOfBounds {
                entry: 1,
                row: 2,
                col: 1,
                rows: 2,
                cols: 2
            })
        );
    }

    #[test]
    fn identity_and_zero_spmv() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spmv(&CscMatrix::identity(4), &v).unwrap(), v.to_vec());
        assert_eq!(spmv(&CscMatrix::zeros(3, 4), &v).unwrap(), vec![0.0; 3]);
        assert!(spmv(&CscMatrix::identity(3), &v).is_err());
        assert!(spmv_transpose(&CscMatrix::zeros(3, 4), &v).is_err());
    }

    #[test]
    fn kkt_block_layout() {
        let a = CscMatrix::identity(2);
        let b = CscMatrix::zeros(1, 2);
        let c = CscMatrix::zeros(1, 1);
        let dcdx = CscMatrix::identity(2);
        let dcdp = csc_from_triplets(&TripletMatrix::from_entries(
            2,
            1,
            vec![(0, 0, 1.0), (1, 0, 1.0)],
        ))
        .unwrap();
        let k = stack_kkt_blocks(&a, &b, &c, &dcdx, &dcdp)
            .unwrap()
            .to_dense();
        #[rustfmt::skip]
        let expected = [
            [1.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 1.0, 0.0, 0.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(k[(i, j)], v, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn kkt_zero_blocks() {
        let k = stack_kkt_blocks(
            &CscMatrix::zeros(3, 3),
            &CscMatrix::zeros(2, 3),
            &CscMatrix::zeros(2, 2),
            &CscMatrix::zeros(3, 3),
            &CscMatrix::zeros(3, 2),
        )
        .unwrap();
        assert_eq!((k.rows(), k.cols(), k.nnz()), (8, 8, 0));
    }

    #[test]
    fn kkt_rejects_bad_shapes() {
        let r = stack_kkt_blocks(
            &CscMatrix::identity(2),
            &CscMatrix::zeros(1, 3),
            &CscMatrix::zeros(1, 1),
            &CscMatrix::identity(2),
            &CscMatrix::zeros(2, 1),
        );
        assert!(matches!(r, Err(SparseError::DimensionMismatch { .. })));
    }

    #[test]
    fn matrix_market_round_trip() {
        let t = TripletMatrix::from_entries(3, 2, vec![(0, 1, 2.5), (2, 0, -1.0), (1, 1, 1e-17)]);
        let m = csc_from_triplets(&t).unwrap();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n3 2 3\n"));
        assert!(text.contains("\n3 1 "));
        let back = CscMatrix::read_matrix_market(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn matrix_market_rejects_zero_index() {
        let src = "%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1.0\n";
        assert!(matches!(
            CscMatrix::read_matrix_market(src.as_bytes()),
            Err(SparseError::MatrixMarket { line: 3, .. })
        ));
    }

    fn arb_triplets(max_dim: usize) -> impl Strategy<Value = TripletMatrix> {
        (1..max_dim, 1..max_dim).prop_flat_map(|(r, c)| {
            prop::collection::vec((0..r, 0..c, -10.0f64..10.0), 0..(r * c + 5))
                .prop_map(move |e| TripletMatrix::from_entries(r, c, e))
        })
    }

    proptest! {
        #[test]
        fn csc_invariants_hold(t in arb_triplets(12)) {
            let m = csc_from_triplets(&t).unwrap();
            prop_assert_eq!(m.nnz(), *m.col_ptr().last().unwrap());
            for j in 0..m.cols() {
                prop_assert!(m.col_ptr()[j] <= m.col_ptr()[j + 1]);
                let rows: Vec<usize> = m.col(j).map(|(i, _)| i).collect();
                prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            }
            // revalidation through the checked constructor
            prop_assert!(CscMatrix::from_raw(m.rows(), m.cols(), m.col_ptr().to_vec(),
                m.row_idx().to_vec(), m.values().to_vec()).is_ok());
        }

        #[test]
        fn csc_dense_round_trip_is_exact(t in arb_triplets(10)) {
            let m = csc_from_triplets(&t).unwrap();
            let again = CscMatrix::from_dense(&m.to_dense());
            // explicit zeros produced by cancellation are dropped by from_dense
            for (i, j, v) in m.iter() {
                prop_assert_eq!(again.get(i, j), v);
            }
            for (i, j, v) in again.iter() {
                prop_assert_eq!(m.get(i, j), v);
            }
        }

        #[test]
        fn transpose_spmv_agrees(t in arb_triplets(10), seed in any::<u64>()) {
            let m = csc_from_triplets(&t).unwrap();
            let v: Vec<f64> = (0..m.rows()).map(|i| ((seed as f64) * 0.37 + i as f64).sin()).collect();
            let a = spmv_transpose(&m, &v).unwrap();
            let b = spmv(&m.transpose(), &v).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn kkt_is_symmetric_for_symmetric_blocks(nx in 1usize..8, np in 1usize..5, seed in any::<u64>()) {
            let val = |i: usize, j: usize, salt: u64| ((seed ^ salt) as f64 * 1e-3 + (i * 31 + j * 17) as f64).sin();
            let sym = |n: usize, salt: u64| {
                let mut t = TripletMatrix::new(n, n);
                for i in 0..n { for j in 0..=i { if (i + j) % 2 == 0 {
                    let v = val(i, j, salt); t.push(i, j, v); if i != j { t.push(j, i, v); }
                } } }
                csc_from_triplets(&t).unwrap()
            };
            let gen = |r: usize, c: usize, salt: u64| {
                let mut t = TripletMatrix::new(r, c);
                for i in 0..r { for j in 0..c { if (i * 7 + j) % 3 == 0 { t.push(i, j, val(i, j, salt)); } } }
                csc_from_triplets(&t).unwrap()
            };
            let k = stack_kkt_blocks(&sym(nx, 1), &gen(np, nx, 2), &sym(np, 3), &gen(nx, nx, 4), &gen(nx, np, 5)).unwrap();
            prop_assert_eq!(k.asymmetry(), 0.0);
        }
    }
}
