//! Objective `f(W, H) = 1/2 |X - W H|_F^2`, its gradients, the imaginary
//! residual RES and the KKT stationarity residual.

use nalgebra::DMatrix;

use crate::error::{check_shape, Error, Result};
use crate::qmatrix::QMatrix;

/// A rank-`l` factor pair `(W, H)`, `W` is `m x l`, `H` is `l x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub w: QMatrix,
    pub h: QMatrix,
}

impl FactorPair {
    pub fn new(w: QMatrix, h: QMatrix) -> Result<Self> {
        if w.cols() != h.rows() {
            return Err(Error::Dimension {
                op: "FactorPair::new",
                lhs: w.shape(),
                rhs: h.shape(),
            });
        }
        Ok(FactorPair { w, h })
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub fn product(&self) -> QMatrix {
        &self.w * &self.h
    }

    pub fn is_feasible(&self) -> bool {
        self.w.is_quasi_nonneg() && self.h.is_quasi_nonneg()
    }

    pub(crate) fn check_against(&self, x: &QMatrix) -> Result<()> {
        let p = self.w.try_mul(&self.h)?;
        check_shape("objective", x.shape(), p.shape())
    }
}

fn residual(x: &QMatrix, w: &QMatrix, h: &QMatrix) -> Result<QMatrix> {
    let wh = w.try_mul(h)?;
    x.try_sub(&wh)
}

pub fn objective(x: &QMatrix, w: &QMatrix, h: &QMatrix) -> Result<f64> {
    Ok(0.5 * residual(x, w, h)?.fro_norm_sqr())
}

/// `grad_W f = -(X - W H) H*`.
pub fn grad_w(x: &QMatrix, w: &QMatrix, h: &QMatrix) -> Result<QMatrix> {
    let r = residual(x, w, h)?;
    Ok((&r * &h.conj_transpose()).scale(-1.0))
}

/// `grad_H f = -W* (X - W H)`.
pub fn grad_h(x: &QMatrix, w: &QMatrix, h: &QMatrix) -> Result<QMatrix> {
    let r = residual(x, w, h)?;
    Ok((&w.conj_transpose() * &r).scale(-1.0))
}

/// `RES = |Im X - Im(W H)|_F`.
pub fn imag_residual(x: &QMatrix, w: &QMatrix, h: &QMatrix) -> Result<f64> {
    let r = residual(x, w, h)?;
    Ok((1..4).map(|k| r.plane(k).norm_squared()).sum::<f64>().sqrt())
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Violation of the first-order conditions for one factor against its
/// gradient: real-plane gradient, negative imaginary gradient entries and the
/// three complementarity products.
fn factor_violation(f: &QMatrix, g: &QMatrix) -> f64 {
    let mut worst = inf_norm(g.plane(0));
    for k in 1..4 {
        let dual = g.plane(k).iter().fold(0.0f64, |acc, &v| acc.max((-v).max(0.0)));
        let comp = inf_norm(&f.plane(k).component_mul(g.plane(k)));
        worst = worst.max(dual).max(comp);
    }
    worst
}

/// Largest violation of the stationarity conditions at a feasible pair. Zero
/// exactly when `(W, H)` is a KKT point.
pub fn kkt_residual(x: &QMatrix, pair: &FactorPair) -> Result<f64> {
    pair.check_against(x)?;
    if !pair.is_feasible() {
        return Err(Error::Domain("KKT residual requires a quasi non-negative pair".into()));
    }
    let gw = grad_w(x, &pair.w, &pair.h)?;
    let gh = grad_h(x, &pair.w, &pair.h)?;
    Ok(factor_violation(&pair.w, &gw).max(factor_violation(&pair.h, &gh)))
}
