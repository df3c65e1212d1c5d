#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use szsc_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random matrix with orthonormal columns.
pub fn orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    assert!(c <= r);
    let g = DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q().columns(0, c).into_owned()
}

fn lambda_max(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}

/// Minimizes `(γ/2)‖S‖² + (1/2)‖B − A S‖²` by gradient descent with step
/// `1/L` until the gradient norm drops below `tol`.
pub fn ridge_gd(a: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64, tol: f64) -> DMatrix<f64> {
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let step = 1.0 / (lambda_max(&ata) + gamma);
    let mut s = DMatrix::zeros(a.ncols(), b.ncols());
    for _ in 0..5_000_000 {
        let grad = &ata * &s - &atb + &s * gamma;
        if grad.norm() < tol {
            return s;
        }
        s -= grad * step;
    }
    panic!("gradient descent oracle did not converge");
}

pub fn dict_objective(y: &DMatrix<f64>, d: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    (y - d * c).norm_squared()
}

fn project_columns(d: &mut DMatrix<f64>) {
    for mut col in d.column_iter_mut() {
        let n = col.norm();
        if n > 1.0 {
            col /= n;
        }
    }
}

/// Projected gradient on `‖Y − D C‖²` over unit-ball columns, step `1/L`,
/// run until the iterates stop moving.
pub fn dict_pg(y: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let cct = c * c.transpose();
    let yct = y * c.transpose();
    let step = 1.0 / (2.0 * lambda_max(&cct));
    let mut d = DMatrix::zeros(y.nrows(), c.nrows());
    for _ in 0..2_000_000 {
        let grad = (&d * &cct - &yct) * 2.0;
        let mut next = &d - grad * step;
        project_columns(&mut next);
        let moved = (&next - &d).norm();
        d = next;
        if moved < 1e-14 {
            break;
        }
    }
    d
}
