//! Runtime property suites with measured margins.
//!
//! Each suite draws seeded random instances, measures the worst violation
//! of an invariant and compares it with a tolerance. A check passes when
//! `measured <= tolerance`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::facerec::{synthetic_corpus, RecognitionModel, TrainSolver};
use crate::init::InitBundle;
use crate::linalg::HpdFactor;
use crate::qmatrix::QMatrix;
use crate::sampling::{factorizable_pure, random_qmatrix, random_quasi_nonneg};
use crate::solvers::{grad_h, grad_w, objective, qadmm_run_with, qipg_run, PgConfig, PgVariant};

pub const SUITES: [&str; 6] = [
    "projection-lemmas",
    "gradients",
    "admm-invariants",
    "descent",
    "real-rep",
    "oracle-recognition",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    /// Worst observed violation.
    pub measured: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    fn new(suite: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CheckOutcome {
            suite,
            name: name.into(),
            measured,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

/// Runs the named suite. Unknown names are a configuration error listing
/// the available suites.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CheckOutcome>> {
    match name {
        "projection-lemmas" => projection_lemmas(seed),
        "gradients" => gradients(seed),
        "admm-invariants" => admm_invariants(seed),
        "descent" => descent(seed),
        "real-rep" => real_rep(seed),
        "oracle-recognition" => oracle_recognition(seed),
        other => Err(Error::Config(format!(
            "unknown suite `{other}`; available: {}",
            SUITES.join(", ")
        ))),
    }
}

fn dims(rng: &mut ChaCha8Rng, max: usize) -> (usize, usize) {
    (rng.random_range(1..=max), rng.random_range(1..=max))
}

fn projection_lemmas(seed: u64) -> Result<Vec<CheckOutcome>> {
    const S: &str = "projection-lemmas";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut v1, mut v2, mut v3) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (m, n) = dims(&mut rng, 6);
        let y = random_qmatrix(&mut rng, m, n).scale(3.0);
        let z = random_qmatrix(&mut rng, m, n).scale(3.0);
        let feasible = random_quasi_nonneg(&mut rng, m, n);
        let (py, pz) = (y.project_quasi_nonneg(), z.project_quasi_nonneg());
        v1 = v1.max(-(&py - &y).re_inner(&(&feasible - &py))?);
        v2 = v2.max(-(&py - &pz).re_inner(&(&y - &z))?);
        v3 = v3.max((&py - &pz).fro_norm() - (&y - &z).fro_norm());
    }
    let mut v4 = 0.0f64;
    for _ in 0..50 {
        let (m, n) = dims(&mut rng, 8);
        let w = random_quasi_nonneg(&mut rng, m, n);
        let d = random_qmatrix(&mut rng, m, n);
        let theta = |a: f64| (&w.axpy(-a, &d).expect("same shape").project_quasi_nonneg() - &w).fro_norm() / a;
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let t = theta(1e-3 * 2f64.powi(k));
            if prev.is_finite() {
                v4 = v4.max(t - prev);
            }
            prev = t;
        }
    }
    Ok(vec![
        CheckOutcome::new(S, "variational inequality", v1, 1e-12),
        CheckOutcome::new(S, "monotonicity", v2, 1e-12),
        CheckOutcome::new(S, "nonexpansiveness", v3, 1e-12),
        CheckOutcome::new(S, "step map nonincreasing", v4, 1e-10),
    ])
}

fn gradients(seed: u64) -> Result<Vec<CheckOutcome>> {
    const S: &str = "gradients";
    const STEP: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 2];
    for _ in 0..20 {
        let x = random_qmatrix(&mut rng, 10, 10);
        let w = random_qmatrix(&mut rng, 10, 3);
        let h = random_qmatrix(&mut rng, 3, 10);
        let analytic = [grad_w(&x, &w, &h)?, grad_h(&x, &w, &h)?];
        for (which, g) in analytic.iter().enumerate() {
            for p in 0..4 {
                let mut fd = g.plane(p).map(|_| 0.0);
                for i in 0..fd.nrows() {
                    for j in 0..fd.ncols() {
                        let eval = |delta: f64| {
                            let (mut w2, mut h2) = (w.clone(), h.clone());
                            let target = if which == 0 { &mut w2 } else { &mut h2 };
                            target.plane_mut(p)[(i, j)] += delta;
                            objective(&x, &w2, &h2).expect("shapes agree")
                        };
                        fd[(i, j)] = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
                    }
                }
                let rel = (&fd - g.plane(p)).norm() / g.plane(p).norm().max(f64::MIN_POSITIVE);
                worst[which] = worst[which].max(rel);
            }
        }
    }
    Ok(vec![
        CheckOutcome::new(S, "W gradient planes vs central differences", worst[0], 1e-5),
        CheckOutcome::new(S, "H gradient planes vs central differences", worst[1], 1e-5),
    ])
}

fn admm_invariants(seed: u64) -> Result<Vec<CheckOutcome>> {
    const S: &str = "admm-invariants";
    let (mut real, mut neg, mut comp, mut infeasible) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
        let (x, _, _) = factorizable_pure(&mut rng, 20, 20, 4);
        let init = InitBundle::draw(seed.wrapping_add(1000 + k), 20, 20, 4).quaternion_admm(0.01, 0.01)?;
        qadmm_run_with(&x, init, 50, 0.0, |_, s| {
            let st = s.multiplier_structure();
            real = real.max(st.max_abs_real);
            neg = neg.max(-st.min_imag);
            comp = comp.max(st.max_abs_complementarity);
            if !st.splits_feasible {
                infeasible = 1.0;
            }
        })?;
    }
    Ok(vec![
        CheckOutcome::new(S, "multiplier real planes are zero", real, 0.0),
        CheckOutcome::new(S, "multiplier imaginary planes are non-negative", neg, 0.0),
        CheckOutcome::new(S, "complementarity products are zero", comp, 0.0),
        CheckOutcome::new(S, "splits are quasi non-negative", infeasible, 0.0),
    ])
}

fn descent(seed: u64) -> Result<Vec<CheckOutcome>> {
    const S: &str = "descent";
    let cfg = PgConfig {
        max_iters: 200,
        ..PgConfig::default()
    };
    let mut out = Vec::new();
    for (variant, label) in [(PgVariant::Basic, "basic"), (PgVariant::Improved, "improved")] {
        let mut worst = 0.0f64;
        for k in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
            let (x, _, _) = factorizable_pure(&mut rng, 30, 30, 5);
            let init = InitBundle::draw(seed.wrapping_add(1000 + k), 30, 30, 5).quaternion_pair();
            let run = qipg_run(&x, &init, &cfg, variant)?;
            for pair in run.trace.objectives().windows(2) {
                worst = worst.max(pair[1] - pair[0]);
            }
        }
        out.push(CheckOutcome::new(S, format!("{label} objective nonincreasing"), worst, 1e-12));
    }
    Ok(out)
}

fn real_rep(seed: u64) -> Result<Vec<CheckOutcome>> {
    const S: &str = "real-rep";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut star, mut plain, mut round, mut hpd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (m, n) = dims(&mut rng, 8);
        let k = rng.random_range(1..=8);
        let a = random_qmatrix(&mut rng, m, n);
        let b = random_qmatrix(&mut rng, k, n);
        let c = random_qmatrix(&mut rng, n, k);
        let scale = 1.0 + a.fro_norm() * b.fro_norm();
        let lhs = (&a * &b.conj_transpose()).real_rep().into_matrix();
        let rhs = a.real_rep().matrix() * b.real_rep().matrix().transpose();
        star = star.max((lhs - rhs).norm() / scale);
        let lhs = (&a * &c).real_rep().into_matrix();
        let rhs = a.real_rep().matrix() * c.real_rep().matrix();
        plain = plain.max((lhs - rhs).norm() / (1.0 + a.fro_norm() * c.fro_norm()));
        round = round.max((&a.real_rep().to_qmatrix()? - &a).fro_norm());
        let gram = &(&a.conj_transpose() * &a) + &QMatrix::identity(n);
        hpd = hpd.max(HpdFactor::new(&gram)?.consistency_defect(&c)?);
    }
    Ok(vec![
        CheckOutcome::new(S, "rep(A B*) = rep(A) rep(B)^T", star, 1e-10),
        CheckOutcome::new(S, "rep(A B) = rep(A) rep(B)", plain, 1e-10),
        CheckOutcome::new(S, "representation round trip", round, 0.0),
        CheckOutcome::new(S, "HPD solve block copies agree", hpd, 1e-9),
    ])
}

fn oracle_recognition(seed: u64) -> Result<Vec<CheckOutcome>> {
    const S: &str = "oracle-recognition";
    let corpus = synthetic_corpus(seed, 5, 4, 10, 8, 8, 4)?;
    let ds = &corpus.dataset;
    let all: Vec<usize> = (0..ds.len()).collect();
    let x = ds.stack(&all)?;
    let model = RecognitionModel::train(&x, ds.labels.clone(), 6, &TrainSolver::default(), seed, 0.0)?;
    let (mut disagreements, mut score_gap) = (0.0, 0.0f64);
    for g in &ds.images {
        let (idx, score) = model.classify(g)?;
        let code = model.encode_probe(g)?;
        let mut best = (0usize, f64::NEG_INFINITY);
        for t in 0..model.h.cols() {
            let (mut dot, mut nc, mut nh) = (0.0, 0.0, 0.0);
            for i in 0..code.rows() {
                let (a, b) = (code.get(i, 0), model.h.get(i, t));
                dot += a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
                nh += a.norm_sqr();
                nc += b.norm_sqr();
            }
            let s = dot / (nh * nc).sqrt();
            if s > best.1 {
                best = (t, s);
            }
        }
        if best.0 != idx {
            disagreements += 1.0;
        }
        score_gap = score_gap.max((best.1 - score).abs());
    }
    let exact = RecognitionModel::from_factors(corpus.w_true.clone(), corpus.h_true.clone(), ds.labels.clone(), 0.0)?;
    let mut misses = 0.0;
    for (t, g) in ds.images.iter().enumerate() {
        if exact.classify(g)?.0 != t {
            misses += 1.0;
        }
    }
    Ok(vec![
        CheckOutcome::new(S, "classify agrees with brute force", disagreements, 0.0),
        CheckOutcome::new(S, "score agrees with brute force", score_gap, 1e-12),
        CheckOutcome::new(S, "exact factors recognize every training image", misses, 0.0),
    ])
}
