//! Quasi non-negative quaternion factorization solvers.

pub mod admm;
pub mod linesearch;
pub mod objective;
pub mod pg;
pub mod trace;

pub use admm::{qadmm_run, qadmm_run_with, qadmm_step, AdmmRun, AdmmState, MultiplierStructure};
pub use linesearch::{armijo_search, LineSearchOutcome, PgConfig, ProjectedIterate, SearchMode};
pub use objective::{grad_h, grad_w, imag_residual, kkt_residual, objective, FactorPair};
pub use pg::{qipg_run, PgVariant, SolverRun};
pub use trace::{Trace, TraceRecord, TRACE_HEADER};
