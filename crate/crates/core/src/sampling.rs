//! Random quaternion matrices for property checks and synthetic problems.

use nalgebra::DMatrix;
use rand::Rng;

use crate::qmatrix::QMatrix;

/// Real matrix with entries uniform on `[lo, hi)`, filled row-major.
pub fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// All four planes uniform on `[-1, 1)`.
pub fn random_qmatrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> QMatrix {
    let planes: [DMatrix<f64>; 4] = std::array::from_fn(|_| uniform_matrix(rng, rows, cols, -1.0, 1.0));
    let [a0, a1, a2, a3] = planes;
    QMatrix::new(a0, a1, a2, a3).expect("planes share a shape")
}

/// Real plane uniform on `[-1, 1)`, imaginary planes uniform on `[0, 1)`.
pub fn random_quasi_nonneg<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> QMatrix {
    let a0 = uniform_matrix(rng, rows, cols, -1.0, 1.0);
    let a1 = uniform_matrix(rng, rows, cols, 0.0, 1.0);
    let a2 = uniform_matrix(rng, rows, cols, 0.0, 1.0);
    let a3 = uniform_matrix(rng, rows, cols, 0.0, 1.0);
    QMatrix::new(a0, a1, a2, a3).expect("planes share a shape")
}

/// Pure quaternion matrix with imaginary planes uniform on `[0, 1)`.
pub fn random_pure_nonneg<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> QMatrix {
    let a1 = uniform_matrix(rng, rows, cols, 0.0, 1.0);
    let a2 = uniform_matrix(rng, rows, cols, 0.0, 1.0);
    let a3 = uniform_matrix(rng, rows, cols, 0.0, 1.0);
    QMatrix::pure(a1, a2, a3).expect("planes share a shape")
}

/// An exactly factorizable, pure-imaginary, quasi non-negative `X = W H`
/// with `W` pure imaginary and `H` real, both entrywise in `[0, 1)`.
pub fn factorizable_pure<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, l: usize) -> (QMatrix, QMatrix, QMatrix) {
    let w = random_pure_nonneg(rng, m, l);
    let h = QMatrix::from_real(uniform_matrix(rng, l, n, 0.0, 1.0));
    let x = &w * &h;
    (x, w, h)
}
