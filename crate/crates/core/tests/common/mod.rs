//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use sgn_core::DenseMatrix;

/// Dense Gaussian elimination with partial pivoting; written without any
/// library code so it can check the sparse solvers.
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).chain([b[i]]).collect())
        .collect();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
            .unwrap();
        m.swap(k, piv);
        assert!(m[k][k] != 0.0, "oracle: singular matrix");
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(f64::MIN_POSITIVE)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Central difference of a vector function along every coordinate of `p`;
/// column `j` of the result is `(F(p + h e_j) - F(p - h e_j)) / 2h`.
pub fn central_jacobian(p: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> DenseMatrix {
    let mut cols = Vec::new();
    for j in 0..p.len() {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[j] += h;
        b[j] -= h;
        let (fa, fb) = (f(&a), f(&b));
        cols.push(
            fa.iter()
                .zip(&fb)
                .map(|(x, y)| (x - y) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let rows = cols.first().map_or(0, |c| c.len());
    DenseMatrix::from_fn(rows, p.len(), |i, j| cols[j][i])
}

pub fn central_gradient(p: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    central_jacobian(p, h, |q| vec![f(q)]).to_rows().remove(0)
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
