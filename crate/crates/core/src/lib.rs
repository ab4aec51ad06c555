//! Quasi non-negative quaternion matrix factorization.
//!
//! Quaternion matrices are stored as four real planes ([`QMatrix`]). A data
//! matrix `X` whose three imaginary planes are non-negative is factorized as
//! `X ~ W H` with `W`, `H` constrained the same way, using either alternating
//! projected gradient with Armijo steps ([`qipg_run`]) or ADMM
//! ([`qadmm_run`]). Real per-channel NMF baselines, color image metrics and a
//! face recognition pipeline are built on top.

pub mod baselines;
pub mod checks;
pub mod error;
pub mod example;
pub mod facerec;
pub mod imaging;
pub mod init;
pub mod linalg;
pub mod qmatrix;
pub mod quaternion;
pub mod sampling;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{hpd_solve, HpdFactor, HpdOptions, Side};
pub use qmatrix::{QMatrix, RealRep};
pub use quaternion::Quaternion;
pub use solvers::{
    armijo_search, grad_h, grad_w, imag_residual, kkt_residual, objective, qadmm_run, qadmm_run_with, qadmm_step,
    qipg_run,
    AdmmState, FactorPair, PgConfig, PgVariant, SearchMode, SolverRun, Trace, TraceRecord,
};
