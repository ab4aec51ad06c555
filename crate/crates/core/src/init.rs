//! Seeded initial factors shared by the quaternion and per-channel methods.
//!
//! Six matrices are drawn from one ChaCha8 stream seeded with a 64-bit seed,
//! in the order `L1, L2, L3` (each `m x l`) then `S1, S2, S3` (each `l x n`).
//! Every matrix is filled row-major with `U[0, 1)` samples. The quaternion
//! methods start from `W0 = L1 i + L2 j + L3 k`, `H0 = S1 i + S2 j + S3 k`;
//! channel `c` of the RGB methods starts from `(L_c, S_c)`. Both families
//! therefore see exactly the same random numbers for a given seed.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{RealAdmmState, RealFactorPair};
use crate::error::Result;
use crate::qmatrix::QMatrix;
use crate::sampling::uniform_matrix;
use crate::solvers::{AdmmState, FactorPair};

#[derive(Debug, Clone, PartialEq)]
pub struct InitBundle {
    pub seed: u64,
    /// `L1, L2, L3`, each `m x l`.
    pub l: [DMatrix<f64>; 3],
    /// `S1, S2, S3`, each `l x n`.
    pub s: [DMatrix<f64>; 3],
}

impl InitBundle {
    pub fn draw(seed: u64, m: usize, n: usize, rank: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = std::array::from_fn(|_| uniform_matrix(&mut rng, m, rank, 0.0, 1.0));
        let s = std::array::from_fn(|_| uniform_matrix(&mut rng, rank, n, 0.0, 1.0));
        InitBundle { seed, l, s }
    }

    /// `(m, n)` of the data the bundle initializes.
    pub fn shape(&self) -> (usize, usize) {
        (self.l[0].nrows(), self.s[0].ncols())
    }

    pub fn rank(&self) -> usize {
        self.l[0].ncols()
    }

    pub fn quaternion_w(&self) -> QMatrix {
        QMatrix::pure(self.l[0].clone(), self.l[1].clone(), self.l[2].clone()).expect("equal shapes")
    }

    pub fn quaternion_h(&self) -> QMatrix {
        QMatrix::pure(self.s[0].clone(), self.s[1].clone(), self.s[2].clone()).expect("equal shapes")
    }

    pub fn quaternion_pair(&self) -> FactorPair {
        FactorPair {
            w: self.quaternion_w(),
            h: self.quaternion_h(),
        }
    }

    /// `W0 = U0 = L0` and `H0 = V0 = P0` from the pure quaternion factors.
    pub fn quaternion_admm(&self, alpha: f64, beta: f64) -> Result<AdmmState> {
        AdmmState::from_factors(self.quaternion_w(), self.quaternion_h(), alpha, beta)
    }

    /// Channel 0 (R), 1 (G) or 2 (B).
    pub fn channel_pair(&self, c: usize) -> RealFactorPair {
        RealFactorPair {
            w: self.l[c].clone(),
            h: self.s[c].clone(),
        }
    }

    pub fn channel_admm(&self, c: usize, alpha: f64, beta: f64) -> Result<RealAdmmState> {
        RealAdmmState::from_factors(self.l[c].clone(), self.s[c].clone(), alpha, beta)
    }
}
