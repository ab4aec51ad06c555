//! Armijo backtracking along the projection arc.
//!
//! A trial step `a` produces `Y(a) = P(X - a G)`. It is accepted when
//!
//! ```text
//! f(Y(a)) - f(X) <= sigma * <G, Y(a) - X>
//! ```
//!
//! The same search drives the quaternion solver (projection onto the quasi
//! non-negative cone) and the real NMF baseline (clamp at zero) through the
//! [`ProjectedIterate`] trait.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::qmatrix::{clamp0, QMatrix};

/// An iterate living in a closed convex cone with an exact projection.
pub trait ProjectedIterate: Clone + PartialEq {
    /// `P(self - step * dir)`.
    fn projected_step(&self, dir: &Self, step: f64) -> Self;
    /// Real inner product `<grad, other - self>`.
    fn directional(&self, grad: &Self, other: &Self) -> f64;
    fn is_zero(&self) -> bool;
}

impl ProjectedIterate for QMatrix {
    fn projected_step(&self, dir: &Self, step: f64) -> Self {
        self.axpy(-step, dir)
            .expect("iterate and gradient share a shape")
            .project_quasi_nonneg()
    }

    fn directional(&self, grad: &Self, other: &Self) -> f64 {
        grad.re_inner(&(other - self)).expect("iterate and gradient share a shape")
    }

    fn is_zero(&self) -> bool {
        self.planes().iter().all(|p| p.iter().all(|&v| v == 0.0))
    }
}

impl ProjectedIterate for DMatrix<f64> {
    fn projected_step(&self, dir: &Self, step: f64) -> Self {
        self.zip_map(dir, |x, d| clamp0(x - step * d))
    }

    fn directional(&self, grad: &Self, other: &Self) -> f64 {
        grad.dot(&(other - self))
    }

    fn is_zero(&self) -> bool {
        self.iter().all(|&v| v == 0.0)
    }
}

/// Projected-gradient parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgConfig {
    /// Backtracking ratio, in (0, 1).
    pub rho: f64,
    /// Sufficient-decrease constant, in (0, 1).
    pub sigma: f64,
    pub max_iters: usize,
    /// Objective evaluations allowed per line search.
    pub max_linesearch: usize,
    pub step_min: f64,
    pub step_max: f64,
    /// Stop once the relative objective decrease of an iteration is at most
    /// this value. Zero disables the test.
    pub stop_tol: f64,
}

impl Default for PgConfig {
    fn default() -> Self {
        PgConfig {
            rho: 0.01,
            sigma: 0.001,
            max_iters: 50,
            max_linesearch: 50,
            step_min: 1e-12,
            step_max: 1e6,
            stop_tol: 0.0,
        }
    }
}

impl PgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.step_min > 0.0 && self.step_min <= self.step_max) {
            return Err(Error::Config(format!(
                "step bounds must satisfy 0 < step_min <= step_max, got [{}, {}]",
                self.step_min, self.step_max
            )));
        }
        if self.max_linesearch == 0 {
            return Err(Error::Config("max_linesearch must be positive".into()));
        }
        if self.stop_tol < 0.0 {
            return Err(Error::Config("stop_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Start at step 1 and shrink by `rho` until accepted.
    Fresh,
    /// Start at the previous step; grow by `1/rho` while accepted, otherwise
    /// shrink by `rho` until accepted.
    Warm,
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub step: f64,
    pub iterate: T,
    pub objective: f64,
    /// Objective evaluations spent.
    pub evals: usize,
    /// Budget or step floor hit before the condition held; `iterate` is the
    /// smallest step tried.
    pub exhausted: bool,
}

struct Trial<T> {
    step: f64,
    iterate: T,
    objective: f64,
    accepted: bool,
}

/// Searches for a step along `P(iterate - step * grad)` satisfying the
/// sufficient-decrease condition. `eval` computes the objective with the
/// partner factor frozen.
pub fn armijo_search<T, F>(
    f_curr: f64,
    iterate: &T,
    grad: &T,
    mut eval: F,
    start_step: f64,
    cfg: &PgConfig,
    mode: SearchMode,
) -> LineSearchOutcome<T>
where
    T: ProjectedIterate,
    F: FnMut(&T) -> f64,
{
    if grad.is_zero() {
        return LineSearchOutcome {
            step: start_step,
            iterate: iterate.clone(),
            objective: f_curr,
            evals: 0,
            exhausted: false,
        };
    }

    let mut evals = 0usize;
    let mut attempt = |step: f64| -> Trial<T> {
        evals += 1;
        let y = iterate.projected_step(grad, step);
        let f = eval(&y);
        let bound = cfg.sigma * iterate.directional(grad, &y);
        Trial {
            step,
            accepted: f - f_curr <= bound,
            iterate: y,
            objective: f,
        }
    };

    let finish = |t: Trial<T>, evals: usize, exhausted: bool| LineSearchOutcome {
        step: t.step,
        iterate: t.iterate,
        objective: t.objective,
        evals,
        exhausted,
    };

    let first_step = match mode {
        SearchMode::Fresh => 1.0,
        SearchMode::Warm => start_step,
    }
    .clamp(cfg.step_min, cfg.step_max);

    let mut trial = attempt(first_step);
    let mut used = 1;

    if trial.accepted && mode == SearchMode::Warm {
        // Grow while the condition keeps holding.
        while used < cfg.max_linesearch {
            let next = trial.step / cfg.rho;
            if next > cfg.step_max {
                break;
            }
            let bigger = attempt(next);
            used += 1;
            if !bigger.accepted {
                break;
            }
            let saturated = bigger.iterate == trial.iterate;
            trial = bigger;
            if saturated {
                break;
            }
        }
        return finish(trial, used, false);
    }

    while !trial.accepted {
        let next = trial.step * cfg.rho;
        if used >= cfg.max_linesearch || next < cfg.step_min {
            return finish(trial, used, true);
        }
        trial = attempt(next);
        used += 1;
    }
    finish(trial, used, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::objective::{grad_w, objective};
    use crate::sampling::{random_quasi_nonneg, random_pure_nonneg};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> QMatrix {
        QMatrix::from_real(DMatrix::from_element(1, 1, v))
    }

    #[test]
    fn zero_gradient_keeps_start_step() {
        let w = scalar(1.0);
        let g = QMatrix::zeros(1, 1);
        let cfg = PgConfig::default();
        for mode in [SearchMode::Fresh, SearchMode::Warm] {
            let out = armijo_search(0.25, &w, &g, |_| unreachable!(), 0.3, &cfg, mode);
            assert_eq!(out.step, 0.3);
            assert_eq!(out.iterate, w);
            assert_eq!(out.objective, 0.25);
            assert!(!out.exhausted);
        }
    }

    #[test]
    fn scalar_full_step_accepted() {
        // X = 2, W = 1, H = 1: f = 0.5, grad_W = -1, step 1 gives W = 2, f = 0.
        let (x, w, h) = (scalar(2.0), scalar(1.0), scalar(1.0));
        let g = grad_w(&x, &w, &h).unwrap();
        assert_eq!(g, scalar(-1.0));
        let cfg = PgConfig { rho: 0.5, sigma: 0.001, ..PgConfig::default() };
        let f0 = objective(&x, &w, &h).unwrap();
        assert_eq!(f0, 0.5);
        let out = armijo_search(f0, &w, &g, |y| objective(&x, y, &h).unwrap(), 1.0, &cfg, SearchMode::Fresh);
        assert_eq!(out.step, 1.0);
        assert_eq!(out.iterate, scalar(2.0));
        assert_eq!(out.objective, 0.0);
        assert_eq!(out.evals, 1);
    }

    #[test]
    fn accepted_steps_never_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = PgConfig::default();
        for _ in 0..20 {
            let x = random_pure_nonneg(&mut rng, 8, 7).scale(3.0);
            let w = random_quasi_nonneg(&mut rng, 8, 3);
            let h = random_quasi_nonneg(&mut rng, 3, 7);
            let f0 = objective(&x, &w, &h).unwrap();
            let g = grad_w(&x, &w, &h).unwrap();
            for (mode, start) in [(SearchMode::Fresh, 1.0), (SearchMode::Warm, 1e-3), (SearchMode::Warm, 10.0)] {
                let out = armijo_search(f0, &w, &g, |y| objective(&x, y, &h).unwrap(), start, &cfg, mode);
                assert!(!out.exhausted);
                assert!(out.iterate.is_quasi_nonneg());
                let dir = w.directional(&g, &out.iterate);
                assert!(dir <= 1e-12);
                assert!(out.objective - f0 <= cfg.sigma * dir);
                assert!(out.objective <= f0);
            }
        }
    }

    #[test]
    fn warm_start_grows_from_small_step() {
        let (x, w, h) = (scalar(2.0), scalar(1.0), scalar(1.0));
        let g = grad_w(&x, &w, &h).unwrap();
        let cfg = PgConfig { rho: 0.5, ..PgConfig::default() };
        let out = armijo_search(0.5, &w, &g, |y| objective(&x, y, &h).unwrap(), 0.25, &cfg, SearchMode::Warm);
        // 0.25 and 0.5 and 1.0 hold; 2.0 gives W = 3, f = 0.5 > bound.
        assert_eq!(out.step, 1.0);
        assert_eq!(out.evals, 4);
    }

    #[test]
    fn exhausted_budget_is_flagged() {
        // An evaluator that never decreases forces exhaustion.
        let w = scalar(1.0);
        let g = scalar(-1.0);
        let cfg = PgConfig { max_linesearch: 3, ..PgConfig::default() };
        let out = armijo_search(0.0, &w, &g, |_| 1.0, 1.0, &cfg, SearchMode::Fresh);
        assert!(out.exhausted);
        assert_eq!(out.evals, 3);
        assert!((out.step - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn real_matrix_projection_clamps() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let d = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        assert_eq!(x.projected_step(&d, 1.0), DMatrix::from_row_slice(1, 2, &[0.0, 1.5]));
    }

    #[test]
    fn config_validation() {
        assert!(PgConfig::default().validate().is_ok());
        assert!(PgConfig { rho: 1.0, ..PgConfig::default() }.validate().is_err());
        assert!(PgConfig { sigma: 0.0, ..PgConfig::default() }.validate().is_err());
        assert!(PgConfig { step_min: 2.0, step_max: 1.0, ..PgConfig::default() }.validate().is_err());
    }
}
