//! Real per-channel NMF baselines: projected gradient and ADMM applied to
//! the R, G and B planes independently.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::error::{check_shape, Error, Result};
use crate::init::InitBundle;
use crate::qmatrix::clamp0;
use crate::solvers::linesearch::PgConfig;
use crate::solvers::pg::{run_pg, FactorProblem, PgVariant};
use crate::solvers::trace::{Trace, TraceRecord};

/// Entrywise non-negative real factors.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFactorPair {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl RealFactorPair {
    pub fn new(w: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        if w.ncols() != h.nrows() {
            return Err(Error::Dimension {
                op: "RealFactorPair::new",
                lhs: w.shape(),
                rhs: h.shape(),
            });
        }
        Ok(RealFactorPair { w, h })
    }

    pub fn is_nonneg(&self) -> bool {
        is_nonneg(&self.w) && is_nonneg(&self.h)
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.w * &self.h
    }
}

/// Red, green and blue planes of equal shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTriple {
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ChannelTriple {
    pub fn new(r: DMatrix<f64>, g: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_shape("ChannelTriple::new", r.shape(), g.shape())?;
        check_shape("ChannelTriple::new", r.shape(), b.shape())?;
        let t = ChannelTriple { r, g, b };
        if !t.channels().iter().all(|c| is_nonneg(c)) {
            return Err(Error::Domain("channel matrices must be non-negative".into()));
        }
        Ok(t)
    }

    pub fn channels(&self) -> [&DMatrix<f64>; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.r.shape()
    }
}

pub(crate) fn is_nonneg(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v >= 0.0)
}

fn residual_norm(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (x - w * h).norm()
}

struct RealProblem<'a> {
    x: &'a DMatrix<f64>,
}

impl FactorProblem for RealProblem<'_> {
    type M = DMatrix<f64>;

    fn objective(&self, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
        0.5 * (self.x - w * h).norm_squared()
    }

    fn grad_w(&self, w: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        -(self.x - w * h) * h.transpose()
    }

    fn grad_h(&self, w: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        -(w.transpose() * (self.x - w * h))
    }

    fn res(&self, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
        residual_norm(self.x, w, h)
    }
}

#[derive(Debug, Clone)]
pub struct RealRun {
    pub pair: RealFactorPair,
    pub trace: Trace,
}

fn check_problem(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<()> {
    if w.ncols() != h.nrows() {
        return Err(Error::Dimension {
            op: "nmf",
            lhs: w.shape(),
            rhs: h.shape(),
        });
    }
    check_shape("nmf", x.shape(), (w.nrows(), h.ncols()))?;
    if !is_nonneg(x) {
        return Err(Error::Domain("data matrix must be non-negative".into()));
    }
    Ok(())
}

/// Projected gradient NMF with warm-started Armijo steps.
pub fn nmf_pg(x: &DMatrix<f64>, init: &RealFactorPair, cfg: &PgConfig) -> Result<RealRun> {
    cfg.validate()?;
    check_problem(x, &init.w, &init.h)?;
    if !init.is_nonneg() {
        return Err(Error::Domain("initial factors must be non-negative".into()));
    }
    let (w, h, trace) = run_pg(&RealProblem { x }, init.w.clone(), init.h.clone(), cfg, PgVariant::Improved);
    Ok(RealRun {
        pair: RealFactorPair { w, h },
        trace,
    })
}

/// Real ADMM iterate; `u`, `v` are the non-negative splits.
#[derive(Debug, Clone, PartialEq)]
pub struct RealAdmmState {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl RealAdmmState {
    /// `W = U = L = w0` and `H = V = P = h0`.
    pub fn from_factors(w0: DMatrix<f64>, h0: DMatrix<f64>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config(format!(
                "penalties must be positive, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if w0.ncols() != h0.nrows() {
            return Err(Error::Dimension {
                op: "RealAdmmState::from_factors",
                lhs: w0.shape(),
                rhs: h0.shape(),
            });
        }
        if !(is_nonneg(&w0) && is_nonneg(&h0)) {
            return Err(Error::Domain("initial splits must be non-negative".into()));
        }
        Ok(RealAdmmState {
            w: w0.clone(),
            h: h0.clone(),
            u: w0.clone(),
            v: h0.clone(),
            lambda: w0,
            pi: h0,
            alpha,
            beta,
        })
    }

    pub fn feasible_pair(&self) -> RealFactorPair {
        RealFactorPair {
            w: self.u.clone(),
            h: self.v.clone(),
        }
    }
}

fn spd_factor(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let sym = (&a + a.transpose()) * 0.5;
    Cholesky::new(sym).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// One real ADMM step, the single-channel counterpart of
/// [`crate::solvers::qadmm_step`].
pub fn nmf_admm_step(x: &DMatrix<f64>, s: &RealAdmmState) -> Result<RealAdmmState> {
    let (alpha, beta) = (s.alpha, s.beta);
    let l = s.w.ncols();
    check_shape("nmf_admm_step", x.shape(), (s.w.nrows(), s.h.ncols()))?;

    let ht = s.h.transpose();
    let gram_h = &s.h * &ht + DMatrix::identity(l, l) * alpha;
    let rhs_w = x * &ht + &s.lambda + &s.u * alpha;
    // W A = B  <=>  A W^T = B^T
    let w = spd_factor(gram_h, "H H^T + alpha I")?.solve(&rhs_w.transpose()).transpose();

    let wt = w.transpose();
    let gram_w = &wt * &w + DMatrix::identity(l, l) * beta;
    let rhs_h = &wt * x + &s.pi + &s.v * beta;
    let h = spd_factor(gram_w, "W^T W + beta I")?.solve(&rhs_h);

    let d = &w - &s.lambda * (1.0 / alpha);
    let u = d.map(clamp0);
    let lambda = (&u - &d) * alpha;

    let e = &h - &s.pi * (1.0 / beta);
    let v = e.map(clamp0);
    let pi = (&v - &e) * beta;

    Ok(RealAdmmState { w, h, u, v, lambda, pi, alpha, beta })
}

#[derive(Debug, Clone)]
pub struct RealAdmmRun {
    pub run: RealRun,
    pub state: RealAdmmState,
}

/// Runs `iters` real ADMM steps and returns the splits `(U, V)`.
pub fn nmf_admm(x: &DMatrix<f64>, init: RealAdmmState, iters: usize) -> Result<RealAdmmRun> {
    nmf_admm_with(x, init, iters, |_, _| {})
}

pub fn nmf_admm_with(
    x: &DMatrix<f64>,
    init: RealAdmmState,
    iters: usize,
    mut observe: impl FnMut(usize, &RealAdmmState),
) -> Result<RealAdmmRun> {
    check_problem(x, &init.w, &init.h)?;
    let start = Instant::now();
    let mut trace = Trace::new(
        0.5 * (x - &init.w * &init.h).norm_squared(),
        residual_norm(x, &init.w, &init.h),
    );
    let mut state = init;
    for iter in 1..=iters {
        state = nmf_admm_step(x, &state)?;
        observe(iter, &state);
        let r = residual_norm(x, &state.w, &state.h);
        trace.records.push(TraceRecord {
            iter,
            objective: 0.5 * r * r,
            res: r,
            step_w: None,
            step_h: None,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            linesearch_evals: 0,
            linesearch_exhausted: false,
        });
    }
    Ok(RealAdmmRun {
        run: RealRun {
            pair: state.feasible_pair(),
            trace,
        },
        state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelMethod {
    Pg(PgConfig),
    Admm { alpha: f64, beta: f64, iters: usize },
}

#[derive(Debug, Clone)]
pub struct ChannelRun {
    /// Factors for R, G, B in that order.
    pub pairs: [RealFactorPair; 3],
    pub channel_traces: [Trace; 3],
    /// Summed objective and combined RES per iteration.
    pub trace: Trace,
    /// Per-channel products the final trace record was measured on:
    /// `W H` for ADMM, the returned pair for projected gradient.
    pub products: [DMatrix<f64>; 3],
}

/// Combines three channel traces: objectives add, RES combines as the root
/// of the summed squares, timings add. A channel that stopped early keeps
/// contributing its last record.
pub fn combine_traces(traces: &[Trace; 3]) -> Trace {
    let mut out = Trace::new(
        traces.iter().map(|t| t.initial_objective).sum(),
        traces.iter().map(|t| t.initial_res.powi(2)).sum::<f64>().sqrt(),
    );
    let len = traces.iter().map(Trace::len).max().unwrap_or(0);
    for i in 0..len {
        let recs: Vec<&TraceRecord> = traces
            .iter()
            .filter_map(|t| t.records.get(i).or_else(|| t.records.last()))
            .collect();
        out.records.push(TraceRecord {
            iter: i + 1,
            objective: recs.iter().map(|r| r.objective).sum(),
            res: recs.iter().map(|r| r.res * r.res).sum::<f64>().sqrt(),
            step_w: None,
            step_h: None,
            elapsed_ms: recs.iter().map(|r| r.elapsed_ms).sum(),
            linesearch_evals: recs.iter().map(|r| r.linesearch_evals).sum(),
            linesearch_exhausted: recs.iter().any(|r| r.linesearch_exhausted),
        });
    }
    out
}

/// Factorizes each channel independently, channel `c` starting from
/// `(L_c, S_c)` of the bundle.
pub fn channel_factorize(x: &ChannelTriple, method: &ChannelMethod, bundle: &InitBundle) -> Result<ChannelRun> {
    let (m, n) = x.shape();
    if bundle.shape() != (m, n) {
        return Err(Error::Dimension {
            op: "channel_factorize",
            lhs: (m, n),
            rhs: bundle.shape(),
        });
    }
    let runs: Vec<Result<(RealRun, DMatrix<f64>)>> = (0..3usize)
        .into_par_iter()
        .map(|c| {
            let data = x.channels()[c];
            let pair = bundle.channel_pair(c);
            match *method {
                ChannelMethod::Pg(cfg) => nmf_pg(data, &pair, &cfg).map(|r| {
                    let p = r.pair.product();
                    (r, p)
                }),
                ChannelMethod::Admm { alpha, beta, iters } => {
                    let state = RealAdmmState::from_factors(pair.w, pair.h, alpha, beta)?;
                    nmf_admm(data, state, iters).map(|r| {
                        let p = &r.state.w * &r.state.h;
                        (r.run, p)
                    })
                }
            }
        })
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let mut next = || runs.next().expect("three channel runs");
    let ((r, pr), (g, pg), (b, pb)) = (next(), next(), next());
    let channel_traces = [r.trace, g.trace, b.trace];
    Ok(ChannelRun {
        pairs: [r.pair, g.pair, b.pair],
        trace: combine_traces(&channel_traces),
        channel_traces,
        products: [pr, pg, pb],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::uniform_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_rank_one_start_does_not_move() {
        let w = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 0.5]);
        let h = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 3.0, 2.0]);
        let x = &w * &h;
        let init = RealFactorPair::new(w, h).unwrap();
        let run = nmf_pg(&x, &init, &PgConfig::default()).unwrap();
        assert_eq!(run.pair, init);
        assert_eq!(run.trace.final_objective(), 0.0);
    }

    #[test]
    fn pg_decreases_and_stays_nonneg() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = uniform_matrix(&mut rng, 20, 20, 0.0, 1.0);
        let init = RealFactorPair::new(
            uniform_matrix(&mut rng, 20, 4, 0.0, 1.0),
            uniform_matrix(&mut rng, 4, 20, 0.0, 1.0),
        )
        .unwrap();
        let cfg = PgConfig { max_iters: 100, ..PgConfig::default() };
        let run = nmf_pg(&x, &init, &cfg).unwrap();
        assert!(run.trace.final_objective() < run.trace.initial_objective);
        assert!(run.trace.objectives().windows(2).all(|p| p[1] <= p[0] + 1e-12));
        assert!(run.pair.is_nonneg());
    }

    #[test]
    fn scalar_admm_w_update() {
        let s = RealAdmmState {
            w: DMatrix::from_element(1, 1, 1.0),
            h: DMatrix::from_element(1, 1, 2.0),
            u: DMatrix::from_element(1, 1, 1.0),
            v: DMatrix::from_element(1, 1, 2.0),
            lambda: DMatrix::zeros(1, 1),
            pi: DMatrix::zeros(1, 1),
            alpha: 1.0,
            beta: 1.0,
        };
        let next = nmf_admm_step(&DMatrix::from_element(1, 1, 4.0), &s).unwrap();
        assert!((next.w[(0, 0)] - 9.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn admm_complementarity_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = uniform_matrix(&mut rng, 10, 12, 0.0, 1.0);
        let init = RealAdmmState::from_factors(
            uniform_matrix(&mut rng, 10, 3, 0.0, 1.0),
            uniform_matrix(&mut rng, 3, 12, 0.0, 1.0),
            0.01,
            0.01,
        )
        .unwrap();
        let out = nmf_admm_with(&x, init, 30, |_, s| {
            assert!(is_nonneg(&s.u) && is_nonneg(&s.v));
            assert!(is_nonneg(&s.lambda) && is_nonneg(&s.pi));
            assert!(s.u.component_mul(&s.lambda).iter().all(|&v| v == 0.0));
            assert!(s.v.component_mul(&s.pi).iter().all(|&v| v == 0.0));
        })
        .unwrap();
        assert!(out.run.pair.is_nonneg());
        assert_eq!(out.run.trace.len(), 30);
    }

    #[test]
    fn identical_channels_give_identical_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let c = uniform_matrix(&mut rng, 8, 9, 0.0, 1.0);
        let x = ChannelTriple::new(c.clone(), c.clone(), c).unwrap();
        let mut bundle = InitBundle::draw(5, 8, 9, 2);
        bundle.l = [bundle.l[0].clone(), bundle.l[0].clone(), bundle.l[0].clone()];
        bundle.s = [bundle.s[0].clone(), bundle.s[0].clone(), bundle.s[0].clone()];
        for method in [
            ChannelMethod::Pg(PgConfig { max_iters: 10, ..PgConfig::default() }),
            ChannelMethod::Admm { alpha: 0.01, beta: 0.01, iters: 10 },
        ] {
            let run = channel_factorize(&x, &method, &bundle).unwrap();
            assert_eq!(run.pairs[0], run.pairs[1]);
            assert_eq!(run.pairs[1], run.pairs[2]);
        }
    }

    #[test]
    fn combined_res_is_root_sum_of_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let ch = |rng: &mut ChaCha8Rng| uniform_matrix(rng, 6, 7, 0.0, 1.0);
        let x = ChannelTriple::new(ch(&mut rng), ch(&mut rng), ch(&mut rng)).unwrap();
        let bundle = InitBundle::draw(9, 6, 7, 2);
        let run = channel_factorize(&x, &ChannelMethod::Admm { alpha: 0.01, beta: 0.01, iters: 5 }, &bundle).unwrap();
        for (i, rec) in run.trace.records.iter().enumerate() {
            let sq: f64 = run.channel_traces.iter().map(|t| t.records[i].res.powi(2)).sum();
            assert!((rec.res - sq.sqrt()).abs() <= 1e-12 * (1.0 + rec.res));
        }
    }

    #[test]
    fn rejects_negative_data() {
        let x = DMatrix::from_element(2, 2, -1.0);
        let init = RealFactorPair::new(DMatrix::zeros(2, 1), DMatrix::zeros(1, 2)).unwrap();
        assert!(nmf_pg(&x, &init, &PgConfig::default()).is_err());
        assert!(ChannelTriple::new(x.clone(), x.clone(), x).is_err());
    }
}
