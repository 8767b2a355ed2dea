//! Dense linear algebra for the small systems that show up in policy
//! evaluation and stationary-distribution checks.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.row_mut(i).copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Consumes both arguments; the factorisation overwrites them.
pub fn solve(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::Internal(format!("rhs has length {} for a {n}x{n} system", b.len())));
    }
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let (pivot, best) = (col..n)
            .map(|r| (r, a.get(r, col).abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= 1e-14 * scale {
            return Err(Error::Internal(format!("singular linear system (column {col} of {n})")));
        }
        if pivot != col {
            for j in 0..n {
                a.data.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a.get(col, col);
        for r in col + 1..n {
            let f = a.get(r, col) / diag;
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.data.split_at_mut(r * n);
            let src = &upper[col * n + col..col * n + n];
            let dst = &mut lower[col..n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= f * s;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| a.get(i, j) * x[j]).sum();
        x[i] = (b[i] - tail) / a.get(i, i);
    }
    Ok(x)
}

/// Stationary vector of a row-stochastic matrix `p` (rows sum to one).
///
/// Solves `pi (P - I) = 0` with the last balance equation replaced by the
/// normalisation `sum pi = 1`.
pub fn stationary(p: &Matrix) -> Result<Vec<f64>> {
    let n = p.dim();
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            // equation j: sum_i pi_i P[i][j] - pi_j = 0, stored transposed
            a.add(j, i, p.get(i, j));
        }
        a.add(i, i, -1.0);
    }
    for j in 0..n {
        a.set(n - 1, j, 1.0);
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    solve(a, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn solves_with_pivoting() {
        // zero leading entry forces a row swap
        let a = Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]);
        let x = solve(a.clone(), vec![5.0, 3.0, 6.0]).unwrap();
        let back = a.mul_vec(&x);
        for (l, r) in back.iter().zip([5.0, 3.0, 6.0]) {
            assert_abs_diff_eq!(*l, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(solve(a, vec![1.0, 2.0]), Err(Error::Internal(_))));
    }

    #[test]
    fn two_state_chain() {
        let p = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.5, 0.5]]);
        let pi = stationary(&p).unwrap();
        assert_abs_diff_eq!(pi[0], 5.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pi[1], 1.0 / 6.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn diagonally_dominant_systems_solve(seed in proptest::collection::vec(-1.0f64..1.0, 16), rhs in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let mut a = Matrix::zeros(4);
            for i in 0..4 {
                for j in 0..4 {
                    a.set(i, j, seed[i * 4 + j]);
                }
                a.add(i, i, 5.0);
            }
            let x = solve(a.clone(), rhs.clone()).unwrap();
            for (l, r) in a.mul_vec(&x).iter().zip(&rhs) {
                prop_assert!((l - r).abs() < 1e-10);
            }
        }
    }
}
