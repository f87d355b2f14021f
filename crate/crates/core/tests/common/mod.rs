//! Independent oracles shared by the integration tests. None of these call
//! the closed forms they are used to check.

#![allow(dead_code)]

use dln_geom::linalg::{haar_orthogonal_with, SquareMatrix};
use dln_geom::manifold::{assemble_network, FrameTuple};
use dln_geom::Network;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn diag(v: &[f64]) -> SquareMatrix {
    SquareMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn lu_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if a[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap_rows(pivot, col);
            det = -det;
        }
        let p = a[(col, col)];
        det *= p;
        for row in col + 1..n {
            let f = a[(row, col)] / p;
            for k in col..n {
                let v = a[(col, k)];
                a[(row, k)] -= f * v;
            }
        }
    }
    det
}

/// `S^a` for symmetric positive semidefinite `S`, via its eigendecomposition.
pub fn sym_power(s: &SquareMatrix, a: f64) -> SquareMatrix {
    let eig = SymmetricEigen::new(s.clone());
    let vals = eig.eigenvalues.map(|v| if a == 0.0 { 1.0 } else { v.max(0.0).powf(a) });
    &eig.eigenvectors * SquareMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `Σ_{p=1}^N (XXᵀ)^{(N−p)/N} P (XᵀX)^{(p−1)/N}` by literal summation.
pub fn power_sum_metric(x: &SquareMatrix, depth: usize, p: &SquareMatrix) -> SquareMatrix {
    let n = depth as f64;
    let left = x * x.transpose();
    let right = x.transpose() * x;
    let mut out = SquareMatrix::zeros(x.nrows(), x.ncols());
    for k in 1..=depth {
        out += sym_power(&left, (n - k as f64) / n) * p * sym_power(&right, (k as f64 - 1.0) / n);
    }
    out
}

/// Largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn fd_gradient<F: Fn(&SquareMatrix) -> f64>(f: F, x: &SquareMatrix, h: f64) -> SquareMatrix {
    let mut g = SquareMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Values in `(lo, hi)` in decreasing order with consecutive gaps of at
/// least `gap`.
pub fn separated_values(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64, gap: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).all(|w| w[0] - w[1] > gap) {
            return v;
        }
    }
}

pub fn random_frames(rng: &mut ChaCha8Rng, depth: usize, d: usize) -> FrameTuple {
    FrameTuple::new((0..=depth).map(|_| haar_orthogonal_with(d, rng)).collect()).unwrap()
}

pub fn random_balanced(rng: &mut ChaCha8Rng, d: usize, depth: usize, lo: f64, hi: f64) -> (Vec<f64>, Network) {
    let lambda = separated_values(rng, d, lo, hi, 0.05);
    let frames = random_frames(rng, depth, d);
    let w = assemble_network(&lambda, &frames).unwrap();
    (lambda, w)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> SquareMatrix {
    SquareMatrix::from_fn(d, d, |_, _| rng.random_range(-scale..scale))
}

/// Identity plus a random perturbation in every layer, generally not balanced.
pub fn random_unbalanced(rng: &mut ChaCha8Rng, d: usize, depth: usize) -> Network {
    Network::new(
        (0..depth)
            .map(|_| SquareMatrix::identity(d, d) + random_matrix(rng, d, 0.3))
            .collect(),
    )
    .unwrap()
}

/// `x(1)` for `ẋ = −2x(x − 1)`, `x(0) = 2`.
pub fn scalar_flow_oracle() -> f64 {
    1.0 / (1.0 - 0.5 * (-2.0f64).exp())
}
