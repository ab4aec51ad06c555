//! Alternating projected gradient with Armijo step selection.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::qmatrix::QMatrix;
use crate::solvers::linesearch::{armijo_search, PgConfig, ProjectedIterate, SearchMode};
use crate::solvers::objective::{self, FactorPair};
use crate::solvers::trace::{Trace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgVariant {
    /// Steps `rho^s` with `s` the smallest non-negative integer passing the
    /// sufficient-decrease test.
    Basic,
    /// Each search starts from the previous accepted step and grows or
    /// shrinks it (the improved variant).
    Improved,
}

impl PgVariant {
    fn mode(self) -> SearchMode {
        match self {
            PgVariant::Basic => SearchMode::Fresh,
            PgVariant::Improved => SearchMode::Warm,
        }
    }
}

/// A least-squares factorization problem over some projected iterate type.
pub(crate) trait FactorProblem {
    type M: ProjectedIterate;

    fn objective(&self, w: &Self::M, h: &Self::M) -> f64;
    fn grad_w(&self, w: &Self::M, h: &Self::M) -> Self::M;
    fn grad_h(&self, w: &Self::M, h: &Self::M) -> Self::M;
    fn res(&self, w: &Self::M, h: &Self::M) -> f64;
}

struct QuatProblem<'a> {
    x: &'a QMatrix,
}

impl FactorProblem for QuatProblem<'_> {
    type M = QMatrix;

    fn objective(&self, w: &QMatrix, h: &QMatrix) -> f64 {
        objective::objective(self.x, w, h).expect("shapes validated")
    }

    fn grad_w(&self, w: &QMatrix, h: &QMatrix) -> QMatrix {
        objective::grad_w(self.x, w, h).expect("shapes validated")
    }

    fn grad_h(&self, w: &QMatrix, h: &QMatrix) -> QMatrix {
        objective::grad_h(self.x, w, h).expect("shapes validated")
    }

    fn res(&self, w: &QMatrix, h: &QMatrix) -> f64 {
        objective::imag_residual(self.x, w, h).expect("shapes validated")
    }
}

/// Runs the alternating projected-gradient loop from `(w, h)`.
///
/// A line search that exhausts its budget without lowering the objective
/// leaves that factor unchanged for the iteration.
pub(crate) fn run_pg<P: FactorProblem>(
    problem: &P,
    mut w: P::M,
    mut h: P::M,
    cfg: &PgConfig,
    variant: PgVariant,
) -> (P::M, P::M, Trace) {
    let start = Instant::now();
    let mode = variant.mode();
    let mut f = problem.objective(&w, &h);
    let mut trace = Trace::new(f, problem.res(&w, &h));
    // Warm starts begin at 1: a zero initial step cannot be grown.
    let (mut step_w, mut step_h) = (1.0, 1.0);

    for iter in 1..=cfg.max_iters {
        if f == 0.0 {
            break;
        }
        let f_prev = f;

        let gw = problem.grad_w(&w, &h);
        let out = armijo_search(f, &w, &gw, |y| problem.objective(y, &h), step_w, cfg, mode);
        let mut evals = out.evals;
        let mut exhausted = out.exhausted;
        step_w = out.step;
        if !(out.exhausted && out.objective > f) {
            w = out.iterate;
            f = out.objective;
        }

        let gh = problem.grad_h(&w, &h);
        let out = armijo_search(f, &h, &gh, |y| problem.objective(&w, y), step_h, cfg, mode);
        evals += out.evals;
        exhausted |= out.exhausted;
        step_h = out.step;
        if !(out.exhausted && out.objective > f) {
            h = out.iterate;
            f = out.objective;
        }

        if exhausted {
            log::warn!("line search budget exhausted at iteration {iter}");
        }
        trace.records.push(TraceRecord {
            iter,
            objective: f,
            res: problem.res(&w, &h),
            step_w: Some(step_w),
            step_h: Some(step_h),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            linesearch_evals: evals,
            linesearch_exhausted: exhausted,
        });

        if cfg.stop_tol > 0.0 && f_prev - f <= cfg.stop_tol * f_prev {
            break;
        }
    }
    (w, h, trace)
}

/// Result of a factorization run.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub pair: FactorPair,
    pub trace: Trace,
}

/// Quaternion projected gradient for `min 1/2 |X - W H|_F^2` over quasi
/// non-negative `W`, `H`.
pub fn qipg_run(x: &QMatrix, init: &FactorPair, cfg: &PgConfig, variant: PgVariant) -> Result<SolverRun> {
    cfg.validate()?;
    init.check_against(x)?;
    if !x.is_quasi_nonneg() {
        return Err(Error::Domain("data matrix must be quasi non-negative".into()));
    }
    if !init.is_feasible() {
        return Err(Error::Domain("initial factors must be quasi non-negative".into()));
    }
    let problem = QuatProblem { x };
    let (w, h, trace) = run_pg(&problem, init.w.clone(), init.h.clone(), cfg, variant);
    Ok(SolverRun {
        pair: FactorPair { w, h },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::worked_example;
    use crate::sampling::random_pure_nonneg;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic(seed: u64) -> (QMatrix, FactorPair) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_pure_nonneg(&mut rng, 30, 5);
        let h = random_pure_nonneg(&mut rng, 5, 30);
        let x = (&w * &h).project_quasi_nonneg();
        let init = FactorPair::new(random_pure_nonneg(&mut rng, 30, 5), random_pure_nonneg(&mut rng, 5, 30)).unwrap();
        (x, init)
    }

    #[test]
    fn stationary_start_terminates_immediately() {
        let (x, w, h) = worked_example();
        let init = FactorPair::new(w, h).unwrap();
        for variant in [PgVariant::Basic, PgVariant::Improved] {
            let run = qipg_run(&x, &init, &PgConfig::default(), variant).unwrap();
            assert!(run.trace.is_empty());
            assert_eq!(run.trace.final_objective(), 0.0);
            assert_eq!(run.pair, init);
        }
    }

    #[test]
    fn descent_and_feasibility() {
        let (x, init) = synthetic(17);
        let cfg = PgConfig { max_iters: 200, ..PgConfig::default() };
        for variant in [PgVariant::Basic, PgVariant::Improved] {
            let run = qipg_run(&x, &init, &cfg, variant).unwrap();
            let objs = run.trace.objectives();
            assert!(objs.windows(2).all(|p| p[1] <= p[0] + 1e-12));
            assert!(run.trace.final_objective() < run.trace.initial_objective);
            assert!(run.pair.is_feasible());
            let iters: Vec<_> = run.trace.records.iter().map(|r| r.iter).collect();
            assert!(iters.windows(2).all(|p| p[1] > p[0]));
        }
    }

    #[test]
    fn stop_tolerance_ends_early() {
        let (x, init) = synthetic(18);
        let cfg = PgConfig { max_iters: 500, stop_tol: 1e-3, ..PgConfig::default() };
        let run = qipg_run(&x, &init, &cfg, PgVariant::Improved).unwrap();
        assert!(run.trace.len() < 500);
    }

    #[test]
    fn rejects_infeasible_inputs() {
        let (x, init) = synthetic(19);
        let bad = FactorPair::new(init.w.scale(-1.0), init.h.clone()).unwrap();
        assert!(qipg_run(&x, &bad, &PgConfig::default(), PgVariant::Basic).is_err());
        assert!(qipg_run(&x.scale(-1.0), &init, &PgConfig::default(), PgVariant::Basic).is_err());
        let cfg = PgConfig { rho: 2.0, ..PgConfig::default() };
        assert!(qipg_run(&x, &init, &cfg, PgVariant::Basic).is_err());
    }
}
