//! Quaternion ADMM on the split problem `W = U, H = V` with `U, V` quasi
//! non-negative.
//!
//! One step applies, in order,
//!
//! ```text
//! W <- (X H* + L + a U)(H H* + a I)^-1
//! H <- (W* W + b I)^-1 (W* X + P + b V)
//! U <- proj(W - L / a)
//! V <- proj(H - P / b)
//! L <- L - a (W - U)
//! P <- P - b (H - V)
//! ```
//!
//! The multiplier updates are evaluated as `L = a (U - D)` with
//! `D = W - L / a`, which is the same quantity but makes the structural
//! identities (zero real plane, non-negative imaginary planes, `U (.) L = 0`)
//! hold exactly in floating point.

use std::time::Instant;

use crate::error::{check_shape, Error, Result};
use crate::linalg::{HpdFactor, Side};
use crate::qmatrix::QMatrix;
use crate::solvers::objective::{self, FactorPair};
use crate::solvers::pg::SolverRun;
use crate::solvers::trace::{Trace, TraceRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: QMatrix,
    pub h: QMatrix,
    pub u: QMatrix,
    pub v: QMatrix,
    pub lambda: QMatrix,
    pub pi: QMatrix,
    pub alpha: f64,
    pub beta: f64,
}

impl AdmmState {
    /// Validates shapes, penalties and feasibility of the splits.
    pub fn new(
        w: QMatrix,
        h: QMatrix,
        u: QMatrix,
        v: QMatrix,
        lambda: QMatrix,
        pi: QMatrix,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config(format!(
                "penalties must be positive, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if w.cols() != h.rows() {
            return Err(Error::Dimension {
                op: "AdmmState::new",
                lhs: w.shape(),
                rhs: h.shape(),
            });
        }
        check_shape("AdmmState::new", w.shape(), u.shape())?;
        check_shape("AdmmState::new", w.shape(), lambda.shape())?;
        check_shape("AdmmState::new", h.shape(), v.shape())?;
        check_shape("AdmmState::new", h.shape(), pi.shape())?;
        if !(u.is_quasi_nonneg() && v.is_quasi_nonneg()) {
            return Err(Error::Domain("split variables U, V must be quasi non-negative".into()));
        }
        Ok(AdmmState { w, h, u, v, lambda, pi, alpha, beta })
    }

    /// `W = U = L = w0` and `H = V = P = h0`.
    pub fn from_factors(w0: QMatrix, h0: QMatrix, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(w0.clone(), h0.clone(), w0.clone(), h0.clone(), w0, h0, alpha, beta)
    }

    /// The quasi non-negative splits `(U, V)`.
    pub fn feasible_pair(&self) -> FactorPair {
        FactorPair {
            w: self.u.clone(),
            h: self.v.clone(),
        }
    }

    /// Largest split gap `max(|W - U|_F, |H - V|_F)`.
    pub fn split_gap(&self) -> f64 {
        (&self.w - &self.u).fro_norm().max((&self.h - &self.v).fro_norm())
    }

    pub fn multiplier_structure(&self) -> MultiplierStructure {
        let (lr, li, lc) = structure_of(&self.u, &self.lambda);
        let (pr, pi, pc) = structure_of(&self.v, &self.pi);
        MultiplierStructure {
            max_abs_real: lr.max(pr),
            min_imag: li.min(pi),
            max_abs_complementarity: lc.max(pc),
            splits_feasible: self.u.is_quasi_nonneg() && self.v.is_quasi_nonneg(),
        }
    }
}

/// Measured structure of the multipliers against their splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierStructure {
    /// Largest |entry| of the real planes of the multipliers.
    pub max_abs_real: f64,
    /// Smallest entry of the imaginary planes of the multipliers.
    pub min_imag: f64,
    /// Largest |U_k (.) L_k| and |V_k (.) P_k| over imaginary planes k.
    pub max_abs_complementarity: f64,
    pub splits_feasible: bool,
}

impl MultiplierStructure {
    /// All identities hold with no tolerance.
    pub fn is_exact(&self) -> bool {
        self.max_abs_real == 0.0
            && self.min_imag >= 0.0
            && self.max_abs_complementarity == 0.0
            && self.splits_feasible
    }
}

fn structure_of(split: &QMatrix, mult: &QMatrix) -> (f64, f64, f64) {
    let real = mult.plane(0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let imag = mult.min_imag();
    let mut comp = 0.0f64;
    for k in 1..4 {
        for (a, b) in split.plane(k).iter().zip(mult.plane(k).iter()) {
            comp = comp.max((a * b).abs());
        }
    }
    (real, imag, comp)
}

/// One ADMM step.
pub fn qadmm_step(x: &QMatrix, s: &AdmmState) -> Result<AdmmState> {
    let (alpha, beta) = (s.alpha, s.beta);
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Config("penalties must be positive".into()));
    }
    let l = s.w.cols();
    check_shape("qadmm_step", x.shape(), (s.w.rows(), s.h.cols()))?;

    let h_star = s.h.conj_transpose();
    let gram_h = &(&s.h * &h_star) + &QMatrix::identity(l).scale(alpha);
    let rhs_w = &(&(x * &h_star) + &s.lambda) + &s.u.scale(alpha);
    let w = HpdFactor::new(&gram_h)?.solve(&rhs_w, Side::Right)?;

    let w_star = w.conj_transpose();
    let gram_w = &(&w_star * &w) + &QMatrix::identity(l).scale(beta);
    let rhs_h = &(&(&w_star * x) + &s.pi) + &s.v.scale(beta);
    let h = HpdFactor::new(&gram_w)?.solve(&rhs_h, Side::Left)?;

    let d = &w - &s.lambda.scale(1.0 / alpha);
    let u = d.project_quasi_nonneg();
    let lambda = (&u - &d).scale(alpha);

    let e = &h - &s.pi.scale(1.0 / beta);
    let v = e.project_quasi_nonneg();
    let pi = (&v - &e).scale(beta);

    Ok(AdmmState { w, h, u, v, lambda, pi, alpha, beta })
}

/// Result of an ADMM run; `run.pair` holds the quasi non-negative `(U, V)`.
#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub run: SolverRun,
    pub state: AdmmState,
}

/// Iterates [`qadmm_step`] for `max_iters` steps, or until
/// `max(|W-U|, |H-V|) / max(1, |X|) <= stop_tol` when `stop_tol > 0`.
///
/// Trace objective and RES are evaluated at `(W, H)`.
pub fn qadmm_run(x: &QMatrix, init: AdmmState, max_iters: usize, stop_tol: f64) -> Result<AdmmRun> {
    qadmm_run_with(x, init, max_iters, stop_tol, |_, _| {})
}

/// [`qadmm_run`] with a callback observing every state (iteration index
/// starting at 1).
pub fn qadmm_run_with(
    x: &QMatrix,
    init: AdmmState,
    max_iters: usize,
    stop_tol: f64,
    mut observe: impl FnMut(usize, &AdmmState),
) -> Result<AdmmRun> {
    if !x.is_quasi_nonneg() {
        return Err(Error::Domain("data matrix must be quasi non-negative".into()));
    }
    if stop_tol < 0.0 {
        return Err(Error::Config("stop_tol must be non-negative".into()));
    }
    check_shape("qadmm_run", x.shape(), (init.w.rows(), init.h.cols()))?;
    let start = Instant::now();
    let x_scale = x.fro_norm().max(1.0);
    let mut trace = Trace::new(
        objective::objective(x, &init.w, &init.h)?,
        objective::imag_residual(x, &init.w, &init.h)?,
    );
    let mut state = init;
    for iter in 1..=max_iters {
        state = qadmm_step(x, &state)?;
        observe(iter, &state);
        trace.records.push(TraceRecord {
            iter,
            objective: objective::objective(x, &state.w, &state.h)?,
            res: objective::imag_residual(x, &state.w, &state.h)?,
            step_w: None,
            step_h: None,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            linesearch_evals: 0,
            linesearch_exhausted: false,
        });
        if stop_tol > 0.0 && state.split_gap() / x_scale <= stop_tol {
            break;
        }
    }
    Ok(AdmmRun {
        run: SolverRun {
            pair: state.feasible_pair(),
            trace,
        },
        state,
    })
}
