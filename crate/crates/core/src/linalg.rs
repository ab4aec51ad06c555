//! Hermitian positive definite quaternion solves.
//!
//! The quaternion system `A X = B` is mapped to the real system
//! `rep(A) rep(X) = rep(B)`. For Hermitian positive definite `A` the real
//! representation is symmetric positive definite, so a real Cholesky
//! factorization applies. Only the first block column of `rep(X)` is solved
//! for; it carries every component plane of `X`. Solving the full block
//! pattern instead gives four copies of each plane, and their disagreement
//! ([`HpdFactor::consistency_defect`]) is a diagnostic for the solve.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::qmatrix::{QMatrix, RealRep};

/// Which side the Hermitian matrix multiplies the unknown from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `A X = B`
    Left,
    /// `X A = B`
    Right,
}

#[derive(Debug, Clone, Copy)]
pub struct HpdOptions {
    /// Accept `A` when `|A - A*|_F <= hermitian_tol * |A|_F`.
    pub hermitian_tol: f64,
}

impl Default for HpdOptions {
    fn default() -> Self {
        HpdOptions {
            hermitian_tol: 1e-8,
        }
    }
}

/// Cached Cholesky factorization of the real representation of an HPD
/// quaternion matrix.
#[derive(Clone, Debug)]
pub struct HpdFactor {
    n: usize,
    chol: Cholesky<f64, Dyn>,
}

impl HpdFactor {
    pub fn new(a: &QMatrix) -> Result<Self> {
        Self::with_options(a, HpdOptions::default())
    }

    pub fn with_options(a: &QMatrix, opts: HpdOptions) -> Result<Self> {
        let (n, c) = a.shape();
        if n != c {
            return Err(Error::Dimension {
                op: "hpd_solve",
                lhs: (n, c),
                rhs: (c, n),
            });
        }
        let skew = (a - &a.conj_transpose()).fro_norm();
        if skew > opts.hermitian_tol * a.fro_norm() {
            return Err(Error::Domain(format!(
                "matrix is not Hermitian: |A - A*|_F = {skew:e}"
            )));
        }
        let rep = a.real_rep().into_matrix();
        // Symmetrize away rounding so the factorization sees an exactly
        // symmetric matrix.
        let sym = (&rep + rep.transpose()) * 0.5;
        let chol = Cholesky::new(sym).ok_or_else(|| {
            Error::Singular(format!(
                "real representation of the {n}x{n} matrix is not positive definite"
            ))
        })?;
        Ok(HpdFactor { n, chol })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &QMatrix, side: Side) -> Result<QMatrix> {
        match side {
            Side::Left => self.solve_left(b),
            Side::Right => Ok(self.solve_left(&b.conj_transpose())?.conj_transpose()),
        }
    }

    fn solve_left(&self, b: &QMatrix) -> Result<QMatrix> {
        if b.rows() != self.n {
            return Err(Error::Dimension {
                op: "hpd_solve",
                lhs: (self.n, self.n),
                rhs: b.shape(),
            });
        }
        let (m, n) = b.shape();
        // First block column of rep(B): [B0; -B2; -B1; -B3].
        let mut rhs = DMatrix::zeros(4 * m, n);
        for (blk, (plane, sign)) in [(0, 1.0), (2, -1.0), (1, -1.0), (3, -1.0)].into_iter().enumerate() {
            rhs.view_mut((blk * m, 0), (m, n)).copy_from(&(b.plane(plane) * sign));
        }
        let sol = self.chol.solve(&rhs);
        let block = |k: usize, sign: f64| sol.view((k * m, 0), (m, n)) * sign;
        let x = QMatrix::new(block(0, 1.0), block(2, -1.0), block(1, -1.0), block(3, -1.0))?;
        if !x.is_finite() {
            return Err(Error::Singular("non-finite solution".into()));
        }
        Ok(x)
    }

    /// Solves `rep(A) Y = rep(B)` for the whole block pattern and returns the
    /// largest disagreement between the four recovered copies of each plane.
    /// At most `1e-9` on well-conditioned systems.
    pub fn consistency_defect(&self, b: &QMatrix) -> Result<f64> {
        if b.rows() != self.n {
            return Err(Error::Dimension {
                op: "hpd_solve",
                lhs: (self.n, self.n),
                rhs: b.shape(),
            });
        }
        Ok(RealRep(self.chol.solve(b.real_rep().matrix())).structure_defect())
    }
}

/// Solves `A X = B` (left) or `X A = B` (right) for Hermitian positive
/// definite `A`.
pub fn hpd_solve(a: &QMatrix, b: &QMatrix, side: Side) -> Result<QMatrix> {
    HpdFactor::new(a)?.solve(b, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_qmatrix;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_qmatrix(&mut rng, 3, 4);
        let a = QMatrix::identity(3).scale(2.0);
        let x = hpd_solve(&a, &b, Side::Left).unwrap();
        assert!((&x - &b.scale(0.5)).fro_norm() < 1e-14);
    }

    #[test]
    fn positive_diagonal_inverse() {
        let d = DVector::from_vec(vec![1.0, 4.0, 0.5]);
        let a = QMatrix::from_real(DMatrix::from_diagonal(&d));
        let x = hpd_solve(&a, &QMatrix::identity(3), Side::Left).unwrap();
        let expected = QMatrix::from_real(DMatrix::from_diagonal(&d.map(|v| 1.0 / v)));
        assert!((&x - &expected).fro_norm() < 1e-14);
    }

    #[test]
    fn gram_plus_identity_left_and_right() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_qmatrix(&mut rng, 7, 4);
        let a = &(&w.conj_transpose() * &w) + &QMatrix::identity(4);
        let b = random_qmatrix(&mut rng, 4, 3);
        let x = hpd_solve(&a, &b, Side::Left).unwrap();
        assert!((&(&a * &x) - &b).fro_norm() <= 1e-9 * b.fro_norm());

        let c = random_qmatrix(&mut rng, 5, 4);
        let y = hpd_solve(&a, &c, Side::Right).unwrap();
        assert!((&(&y * &a) - &c).fro_norm() <= 1e-9 * c.fro_norm());
    }

    #[test]
    fn block_copies_agree_on_well_conditioned_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = random_qmatrix(&mut rng, 9, 5);
            let a = &(&w.conj_transpose() * &w) + &QMatrix::identity(5);
            let b = random_qmatrix(&mut rng, 5, 3);
            let d = HpdFactor::new(&a).unwrap().consistency_defect(&b).unwrap();
            assert!(d <= 1e-9, "{d:e}");
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_qmatrix(&mut rng, 3, 3);
        let b = random_qmatrix(&mut rng, 3, 1);
        assert!(matches!(hpd_solve(&a, &b, Side::Left), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_indefinite() {
        let a = QMatrix::identity(2).scale(-1.0);
        let b = QMatrix::identity(2);
        assert!(matches!(hpd_solve(&a, &b, Side::Left), Err(Error::Singular(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = QMatrix::identity(3);
        assert!(hpd_solve(&a, &QMatrix::zeros(2, 2), Side::Left).is_err());
        assert!(hpd_solve(&QMatrix::zeros(2, 3), &QMatrix::zeros(2, 2), Side::Left).is_err());
    }
}
