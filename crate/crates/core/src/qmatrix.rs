//! Dense quaternion matrices stored as four real component planes.
//!
//! A matrix `A = A0 + A1 i + A2 j + A3 k` keeps `A0..A3` as separate
//! `DMatrix<f64>` values of identical shape. Products are evaluated plane by
//! plane with sixteen real GEMMs, which is how every solver in this crate
//! touches quaternion data.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{check_shape, Error, Result};
use crate::quaternion::Quaternion;

#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    planes: [DMatrix<f64>; 4],
}

/// 4m x 4n real representation of an m x n quaternion matrix.
///
/// Block layout:
/// ```text
///  A0   A2   A1   A3
/// -A2   A0   A3  -A1
/// -A1  -A3   A0   A2
/// -A3   A1  -A2   A0
/// ```
/// The map is a homomorphism: `rep(A B) = rep(A) rep(B)` and
/// `rep(A B*) = rep(A) rep(B)^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealRep(pub DMatrix<f64>);

// (block row, block column, component plane, sign) for every block of the
// real representation.
const REP_LAYOUT: [(usize, usize, usize, f64); 16] = [
    (0, 0, 0, 1.0),
    (0, 1, 2, 1.0),
    (0, 2, 1, 1.0),
    (0, 3, 3, 1.0),
    (1, 0, 2, -1.0),
    (1, 1, 0, 1.0),
    (1, 2, 3, 1.0),
    (1, 3, 1, -1.0),
    (2, 0, 1, -1.0),
    (2, 1, 3, -1.0),
    (2, 2, 0, 1.0),
    (2, 3, 2, 1.0),
    (3, 0, 3, -1.0),
    (3, 1, 1, 1.0),
    (3, 2, 2, -1.0),
    (3, 3, 0, 1.0),
];

impl RealRep {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Recovers the quaternion matrix from the first block column.
    pub fn to_qmatrix(&self) -> Result<QMatrix> {
        let (r4, c4) = self.0.shape();
        if r4 % 4 != 0 || c4 % 4 != 0 {
            return Err(Error::Domain(format!(
                "real representation shape {r4}x{c4} is not a multiple of 4"
            )));
        }
        let (m, n) = (r4 / 4, c4 / 4);
        let block = |br: usize| self.0.view((br * m, 0), (m, n)).into_owned();
        Ok(QMatrix::from_planes_unchecked([
            block(0),
            -block(2),
            -block(1),
            -block(3),
        ]))
    }

    /// Largest disagreement between the four copies of each component plane
    /// embedded in the block pattern. Zero for an exact representation.
    pub fn structure_defect(&self) -> f64 {
        let (r4, c4) = self.0.shape();
        let (m, n) = (r4 / 4, c4 / 4);
        let mut copies: [Vec<DMatrix<f64>>; 4] = Default::default();
        for &(br, bc, plane, sign) in REP_LAYOUT.iter() {
            let b = self.0.view((br * m, bc * n), (m, n)).into_owned() * sign;
            copies[plane].push(b);
        }
        let mut worst = 0.0f64;
        for group in copies.iter() {
            for other in &group[1..] {
                worst = worst.max((other - &group[0]).amax());
            }
        }
        worst
    }
}

impl QMatrix {
    pub fn new(a0: DMatrix<f64>, a1: DMatrix<f64>, a2: DMatrix<f64>, a3: DMatrix<f64>) -> Result<Self> {
        let s = a0.shape();
        check_shape("QMatrix::new", s, a1.shape())?;
        check_shape("QMatrix::new", s, a2.shape())?;
        check_shape("QMatrix::new", s, a3.shape())?;
        Ok(Self::from_planes_unchecked([a0, a1, a2, a3]))
    }

    pub(crate) fn from_planes_unchecked(planes: [DMatrix<f64>; 4]) -> Self {
        debug_assert!(planes.iter().all(|p| p.shape() == planes[0].shape()));
        QMatrix { planes }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_planes_unchecked(std::array::from_fn(|_| DMatrix::zeros(rows, cols)))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real(DMatrix::identity(n, n))
    }

    /// Quaternion matrix whose imaginary planes are zero.
    pub fn from_real(a0: DMatrix<f64>) -> Self {
        let (r, c) = a0.shape();
        Self::from_planes_unchecked([a0, DMatrix::zeros(r, c), DMatrix::zeros(r, c), DMatrix::zeros(r, c)])
    }

    /// Pure quaternion matrix `a1 i + a2 j + a3 k`.
    pub fn pure(a1: DMatrix<f64>, a2: DMatrix<f64>, a3: DMatrix<f64>) -> Result<Self> {
        let (r, c) = a1.shape();
        Self::new(DMatrix::zeros(r, c), a1, a2, a3)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Quaternion) -> Self {
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.planes[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.planes[0].ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.planes[0].shape()
    }

    /// Component plane 0 (real), 1 (i), 2 (j) or 3 (k).
    pub fn plane(&self, k: usize) -> &DMatrix<f64> {
        &self.planes[k]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.planes[k]
    }

    pub fn planes(&self) -> &[DMatrix<f64>; 4] {
        &self.planes
    }

    pub fn into_planes(self) -> [DMatrix<f64>; 4] {
        self.planes
    }

    pub fn get(&self, i: usize, j: usize) -> Quaternion {
        let p = &self.planes;
        Quaternion::new(p[0][(i, j)], p[1][(i, j)], p[2][(i, j)], p[3][(i, j)])
    }

    pub fn set(&mut self, i: usize, j: usize, q: Quaternion) {
        self.planes[0][(i, j)] = q.w;
        self.planes[1][(i, j)] = q.x;
        self.planes[2][(i, j)] = q.y;
        self.planes[3][(i, j)] = q.z;
    }

    pub fn map_planes(&self, mut f: impl FnMut(usize, &DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self::from_planes_unchecked(std::array::from_fn(|k| f(k, &self.planes[k])))
    }

    fn zip_planes(
        &self,
        rhs: &QMatrix,
        mut f: impl FnMut(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
    ) -> Self {
        Self::from_planes_unchecked(std::array::from_fn(|k| f(&self.planes[k], &rhs.planes[k])))
    }

    /// Quaternion matrix product `self * rhs`.
    pub fn try_mul(&self, rhs: &QMatrix) -> Result<QMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::Dimension {
                op: "qmat_mul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let (m, n) = (self.rows(), rhs.cols());
        let [w0, w1, w2, w3] = &self.planes;
        let [h0, h1, h2, h3] = &rhs.planes;
        let terms: [[(f64, &DMatrix<f64>, &DMatrix<f64>); 4]; 4] = [
            [(1.0, w0, h0), (-1.0, w1, h1), (-1.0, w2, h2), (-1.0, w3, h3)],
            [(1.0, w0, h1), (1.0, w1, h0), (1.0, w2, h3), (-1.0, w3, h2)],
            [(1.0, w0, h2), (-1.0, w1, h3), (1.0, w2, h0), (1.0, w3, h1)],
            [(1.0, w0, h3), (1.0, w1, h2), (-1.0, w2, h1), (1.0, w3, h0)],
        ];
        let planes = terms.map(|row| {
            let mut acc = DMatrix::zeros(m, n);
            for (sign, a, b) in row {
                acc.gemm(sign, a, b, 1.0);
            }
            acc
        });
        Ok(Self::from_planes_unchecked(planes))
    }

    /// `A* = A0^T - A1^T i - A2^T j - A3^T k`.
    pub fn conj_transpose(&self) -> QMatrix {
        self.map_planes(|k, p| if k == 0 { p.transpose() } else { -p.transpose() })
    }

    pub fn transpose(&self) -> QMatrix {
        self.map_planes(|_, p| p.transpose())
    }

    pub fn conj(&self) -> QMatrix {
        self.map_planes(|k, p| if k == 0 { p.clone() } else { -p })
    }

    pub fn scale(&self, s: f64) -> QMatrix {
        self.map_planes(|_, p| p * s)
    }

    pub fn try_add(&self, rhs: &QMatrix) -> Result<QMatrix> {
        check_shape("add", self.shape(), rhs.shape())?;
        Ok(self.zip_planes(rhs, |a, b| a + b))
    }

    pub fn try_sub(&self, rhs: &QMatrix) -> Result<QMatrix> {
        check_shape("sub", self.shape(), rhs.shape())?;
        Ok(self.zip_planes(rhs, |a, b| a - b))
    }

    /// `self + s * rhs`.
    pub fn axpy(&self, s: f64, rhs: &QMatrix) -> Result<QMatrix> {
        check_shape("axpy", self.shape(), rhs.shape())?;
        Ok(self.zip_planes(rhs, |a, b| a + b * s))
    }

    pub fn fro_norm_sqr(&self) -> f64 {
        self.planes.iter().map(|p| p.norm_squared()).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm_sqr().sqrt()
    }

    /// Real part of `<A, B> = Tr(B* A)`, i.e. the sum of the four real
    /// channelwise inner products.
    pub fn re_inner(&self, rhs: &QMatrix) -> Result<f64> {
        check_shape("re_inner", self.shape(), rhs.shape())?;
        Ok(self
            .planes
            .iter()
            .zip(rhs.planes.iter())
            .map(|(a, b)| a.dot(b))
            .sum())
    }

    /// Projection onto the quasi non-negative cone: the real plane is kept,
    /// the three imaginary planes are clamped at zero.
    pub fn project_quasi_nonneg(&self) -> QMatrix {
        self.map_planes(|k, p| if k == 0 { p.clone() } else { p.map(clamp0) })
    }

    pub fn is_quasi_nonneg(&self) -> bool {
        self.planes[1..].iter().all(|p| p.iter().all(|&v| v >= 0.0))
    }

    /// Smallest entry over the three imaginary planes (`+inf` when empty).
    pub fn min_imag(&self) -> f64 {
        self.planes[1..]
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Copy with the real plane zeroed.
    pub fn imag(&self) -> QMatrix {
        self.map_planes(|k, p| if k == 0 { DMatrix::zeros(p.nrows(), p.ncols()) } else { p.clone() })
    }

    pub fn column(&self, j: usize) -> QMatrix {
        self.map_planes(|_, p| p.columns(j, 1).into_owned())
    }

    /// Horizontally stacks column blocks of equal height.
    pub fn hstack(blocks: &[QMatrix]) -> Result<QMatrix> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Domain("hstack of zero blocks".into()))?;
        let rows = first.rows();
        let cols: usize = blocks.iter().map(QMatrix::cols).sum();
        let mut out = QMatrix::zeros(rows, cols);
        let mut at = 0;
        for b in blocks {
            check_shape("hstack", (rows, b.cols()), b.shape())?;
            for k in 0..4 {
                out.planes[k].columns_mut(at, b.cols()).copy_from(&b.planes[k]);
            }
            at += b.cols();
        }
        Ok(out)
    }

    pub fn real_rep(&self) -> RealRep {
        let (m, n) = self.shape();
        let mut out = DMatrix::zeros(4 * m, 4 * n);
        for &(br, bc, plane, sign) in REP_LAYOUT.iter() {
            out.view_mut((br * m, bc * n), (m, n))
                .copy_from(&(&self.planes[plane] * sign));
        }
        RealRep(out)
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

#[inline]
pub(crate) fn clamp0(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

impl<'a> Mul<&'a QMatrix> for &'a QMatrix {
    type Output = QMatrix;

    /// Panics on dimension mismatch; see [`QMatrix::try_mul`].
    fn mul(self, rhs: &QMatrix) -> QMatrix {
        self.try_mul(rhs).expect("quaternion matrix product dimension mismatch")
    }
}

impl<'a> Add<&'a QMatrix> for &'a QMatrix {
    type Output = QMatrix;

    fn add(self, rhs: &QMatrix) -> QMatrix {
        self.try_add(rhs).expect("quaternion matrix sum dimension mismatch")
    }
}

impl<'a> Sub<&'a QMatrix> for &'a QMatrix {
    type Output = QMatrix;

    fn sub(self, rhs: &QMatrix) -> QMatrix {
        self.try_sub(rhs).expect("quaternion matrix difference dimension mismatch")
    }
}

impl Neg for &QMatrix {
    type Output = QMatrix;

    fn neg(self) -> QMatrix {
        self.scale(-1.0)
    }
}
