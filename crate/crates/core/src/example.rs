//! A 4x4 quasi non-negative matrix with an exact rank-one factorization.

use nalgebra::DMatrix;

use crate::qmatrix::QMatrix;

#[rustfmt::skip]
const X0: [f64; 16] = [
    -6.0, 3.0, -2.0, -9.0,
     2.0, 9.0,  2.0, -5.0,
    -5.0, 1.0, -3.0, -7.0,
    -4.0, 7.0,  0.0, -11.0,
];
#[rustfmt::skip]
const X1: [f64; 16] = [
    3.0, 3.0, 7.0, 3.0,
    4.0, 2.0, 6.0, 2.0,
    0.0, 2.0, 4.0, 0.0,
    2.0, 0.0, 8.0, 4.0,
];
#[rustfmt::skip]
const X2: [f64; 16] = [
     9.0, 10.0, 5.0, 0.0,
     8.0,  4.0, 2.0, 4.0,
     6.0,  6.0, 4.0, 0.0,
    14.0, 12.0, 8.0, 4.0,
];
#[rustfmt::skip]
const X3: [f64; 16] = [
    2.0, 5.0, 0.0, 1.0,
    4.0, 3.0, 4.0, 5.0,
    3.0, 6.0, 1.0, 0.0,
    2.0, 7.0, 2.0, 1.0,
];

/// Returns `(X, W, H)` with `X = W H`, `W` 4x1 and `H` 1x4.
pub fn worked_example() -> (QMatrix, QMatrix, QMatrix) {
    let m = |d: &[f64]| DMatrix::from_row_slice(4, 4, d);
    let x = QMatrix::new(m(&X0), m(&X1), m(&X2), m(&X3)).expect("4x4 planes");

    let col = |d: [f64; 4]| DMatrix::from_column_slice(4, 1, &d);
    let w = QMatrix::new(
        col([2.0, 3.0, 1.0, 3.0]),
        col([1.0, 0.0, 1.0, 0.0]),
        col([2.0, 0.0, 1.0, 2.0]),
        col([2.0, 1.0, 2.0, 3.0]),
    )
    .expect("4x1 planes");

    let row = |d: [f64; 4]| DMatrix::from_row_slice(1, 4, &d);
    let h = QMatrix::new(
        row([1.0, 3.0, 1.0, -1.0]),
        row([2.0, 1.0, 2.0, 1.0]),
        row([2.0, 1.0, 0.0, 1.0]),
        row([1.0, 0.0, 1.0, 2.0]),
    )
    .expect("1x4 planes");

    (x, w, h)
}
