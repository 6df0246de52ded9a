use std::collections::VecDeque;

use crate::dense::{dot, norm2};

/// The most recent curvature pairs `(s, y)`, oldest first.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores the pair unless `s^T y <= 1e-12 |s| |y|`; returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm2(&s) * norm2(&y)) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
        true
    }

    /// `s^T y / y^T y` of the newest pair, 1 when empty.
    pub fn gamma(&self) -> f64 {
        self.pairs
            .back()
            .map(|(s, y)| dot(s, y) / dot(y, y))
            .unwrap_or(1.0)
    }
}

/// Two-loop recursion returning `-H grad`, where `h0` applies the initial
/// inverse Hessian to a vector.
pub fn two_loop<E>(
    history: &LbfgsHistory,
    grad: &[f64],
    h0: impl FnOnce(&[f64]) -> Result<Vec<f64>, E>,
) -> Result<Vec<f64>, E> {
    let mut q = grad.to_vec();
    let m = history.pairs.len();
    let mut alpha = vec![0.0; m];
    let mut rho = vec![0.0; m];
    for (k, (s, y)) in history.pairs.iter().enumerate().rev() {
        rho[k] = 1.0 / dot(y, s);
        alpha[k] = rho[k] * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha[k] * yi;
        }
    }
    let mut r = h0(&q)?;
    for (k, (s, y)) in history.pairs.iter().enumerate() {
        let beta = rho[k] * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += (alpha[k] - beta) * si;
        }
    }
    r.iter_mut().for_each(|v| *v = -*v);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use std::convert::Infallible;

    fn scaled(history: &LbfgsHistory, g: &[f64]) -> Vec<f64> {
        let gamma = history.gamma();
        two_loop::<Infallible>(history, g, |q| Ok(q.iter().map(|v| gamma * v).collect())).unwrap()
    }

    #[test]
    fn empty_history_is_steepest_descent() {
        let h = LbfgsHistory::new(5);
        assert_eq!(scaled(&h, &[1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn rejects_non_positive_curvature() {
        let mut h = LbfgsHistory::new(2);
        assert!(!h.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!h.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(h.push(vec![1.0, 0.0], vec![1.0, 0.5]));
        assert!(h.push(vec![0.0, 1.0], vec![0.5, 2.0]));
        assert!(h.push(vec![1.0, 1.0], vec![1.0, 1.0]));
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn satisfies_secant_equation() {
        let mut h = LbfgsHistory::new(3);
        h.push(vec![1.0, 0.0, 0.5], vec![2.0, 0.1, 0.3]);
        h.push(vec![0.2, 1.0, -0.1], vec![0.1, 3.0, 0.0]);
        // H y_newest = s_newest
        let (s, y) = h.pairs.back().unwrap().clone();
        let hy: Vec<f64> = scaled(&h, &y).iter().map(|v| -v).collect();
        for i in 0..3 {
            assert!((hy[i] - s[i]).abs() < 1e-12);
        }
    }

    /// Independent finite-termination check: exact line searches on a
    /// 5-dimensional quadratic.
    #[test]
    fn quadratic_finite_termination() {
        let q = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 0.0, 0.0, 0.5],
            vec![1.0, 3.0, 0.2, 0.0, 0.0],
            vec![0.0, 0.2, 2.0, 0.3, 0.0],
            vec![0.0, 0.0, 0.3, 5.0, 0.1],
            vec![0.5, 0.0, 0.0, 0.1, 1.0],
        ]);
        let b = [1.0, -2.0, 0.5, 3.0, -1.0];
        let grad =
            |p: &[f64]| -> Vec<f64> { q.matvec(p).iter().zip(&b).map(|(a, b)| a - b).collect() };
        let mut p = vec![0.0; 5];
        let mut h = LbfgsHistory::new(10);
        let mut g = grad(&p);
        let mut iters = 0;
        while norm2(&g) > 1e-10 && iters < 6 {
            let d = scaled(&h, &g);
            let qd = q.matvec(&d);
            let alpha = -dot(&g, &d) / dot(&d, &qd);
            let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
            p.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            let g_new = grad(&p);
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            h.push(s, y);
            g = g_new;
            iters += 1;
        }
        assert!(norm2(&g) <= 1e-10, "gradient {} after {iters}", norm2(&g));
    }
}
