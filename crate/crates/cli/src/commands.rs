use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use quatfact_core::baselines::{channel_factorize, ChannelMethod, ChannelTriple};
use quatfact_core::checks::run_suite;
use quatfact_core::facerec::{evaluate, synthetic_corpus, write_corpus, FaceDataset, RecognitionMethod, Split};
use quatfact_core::imaging::{load_image, psnr, psnr_conventional, save_image, ColorImage};
use quatfact_core::init::InitBundle;
use quatfact_core::{qadmm_run, qipg_run, Error, PgConfig, PgVariant, QMatrix, Trace};

use crate::{CheckArgs, FactorizeArgs, GenCorpusArgs, Method, RecognizeArgs, RecognizeMethod, Variant};

#[derive(Serialize)]
struct FactorizeReport {
    method: &'static str,
    l: usize,
    iters: usize,
    seed: u64,
    /// `null` for an exact reconstruction.
    psnr_db: Option<f64>,
    res_final: f64,
    objective_final: f64,
    /// `null` unless timing was requested.
    elapsed_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psnr_conventional_db: Option<Option<f64>>,
}

#[derive(Serialize)]
struct RecognizeReport {
    method: &'static str,
    l: usize,
    iters: usize,
    seed: u64,
    accuracy: f64,
    training_residual: f64,
    train_images: usize,
    probes: usize,
    elapsed_ms: Option<f64>,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Qipgm => "qipgm",
        Method::Qadmm => "qadmm",
        Method::Ripgm => "ripgm",
        Method::Radmm => "radmm",
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Rejects parameters that do not belong to the chosen method.
fn check_params(a: &FactorizeArgs) -> Result<()> {
    let pg = matches!(a.method, Method::Qipgm | Method::Ripgm);
    let name = method_name(a.method);
    let stray = if pg {
        [("--alpha", a.alpha.is_some()), ("--beta", a.beta.is_some())]
            .into_iter()
            .find(|(_, set)| *set)
    } else {
        [("--rho", a.rho.is_some()), ("--sigma", a.sigma.is_some()), ("--variant", a.variant.is_some())]
            .into_iter()
            .find(|(_, set)| *set)
    };
    if let Some((flag, _)) = stray {
        return Err(Error::Config(format!("{flag} does not apply to method {name}")).into());
    }
    if a.method == Method::Ripgm && a.variant == Some(Variant::Basic) {
        return Err(Error::Config("ripgm uses the improved line search only".into()).into());
    }
    if a.l == 0 {
        return Err(Error::Config("--l must be positive".into()).into());
    }
    Ok(())
}

pub fn factorize(a: &FactorizeArgs) -> Result<u8> {
    check_params(a)?;
    let img = load_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let x = img.to_quaternion();
    let (m, n) = x.shape();
    let bundle = InitBundle::draw(a.seed, m, n, a.l);
    let pg_cfg = PgConfig {
        rho: a.rho.unwrap_or(0.01),
        sigma: a.sigma.unwrap_or(0.001),
        max_iters: a.iters,
        ..PgConfig::default()
    };
    let (alpha, beta) = (a.alpha.unwrap_or(0.01), a.beta.unwrap_or(0.01));

    let (trace, z): (Trace, QMatrix) = match a.method {
        Method::Qipgm => {
            let variant = match a.variant.unwrap_or(Variant::Improved) {
                Variant::Basic => PgVariant::Basic,
                Variant::Improved => PgVariant::Improved,
            };
            let run = qipg_run(&x, &bundle.quaternion_pair(), &pg_cfg, variant)?;
            let z = run.pair.product();
            (run.trace, z)
        }
        Method::Qadmm => {
            let run = qadmm_run(&x, bundle.quaternion_admm(alpha, beta)?, a.iters, 0.0)?;
            let z = &run.state.w * &run.state.h;
            (run.run.trace, z)
        }
        Method::Ripgm | Method::Radmm => {
            let [r, g, b] = img.channels();
            let triple = ChannelTriple::new(r.clone(), g.clone(), b.clone())?;
            let method = if a.method == Method::Ripgm {
                ChannelMethod::Pg(pg_cfg)
            } else {
                ChannelMethod::Admm { alpha, beta, iters: a.iters }
            };
            let run = channel_factorize(&triple, &method, &bundle)?;
            let [pr, pg, pb] = run.products;
            (run.trace, QMatrix::pure(pr, pg, pb)?)
        }
    };

    let quality = psnr(&x, &z)?;
    let report = FactorizeReport {
        method: method_name(a.method),
        l: a.l,
        iters: a.iters,
        seed: a.seed,
        psnr_db: finite(quality.psnr_db),
        res_final: trace.final_res(),
        objective_final: trace.final_objective(),
        elapsed_ms: a.timing.then(|| trace.elapsed_ms()),
        psnr_conventional_db: if a.psnr_conventional {
            Some(finite(psnr_conventional(&x, &z)?))
        } else {
            None
        },
    };

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let trace_path = a.out_dir.join("trace.csv");
    trace.write_csv(BufWriter::new(File::create(&trace_path)?), a.timing)?;
    write_json(&a.out_dir.join("report.json"), &report)?;
    if let Some(path) = &a.reconstruct {
        save_image(&ColorImage::from_quaternion(&z), path)?;
    }
    println!(
        "{} l={} iters={} psnr_db={} res={:.6e}",
        report.method,
        a.l,
        trace.len(),
        report.psnr_db.map_or("inf".to_string(), |v| format!("{v:.4}")),
        report.res_final
    );
    Ok(0)
}

pub fn recognize(a: &RecognizeArgs) -> Result<u8> {
    let start = Instant::now();
    let ds = FaceDataset::load_manifest(&a.manifest, a.eta, a.seed)
        .with_context(|| format!("loading {}", a.manifest.display()))?;
    let (train, test) = if a.train_equals_test {
        let all: Vec<usize> = (0..ds.len()).collect();
        (all.clone(), all)
    } else {
        (ds.indices(Split::Train), ds.indices(Split::Test))
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("both the training and the test split must be nonempty".into()).into());
    }
    let (method, name) = match a.method {
        RecognizeMethod::QadmmColor => (RecognitionMethod::QadmmColor, "qadmm-color"),
        RecognizeMethod::RadmmColor => (RecognitionMethod::RadmmColor, "radmm-color"),
        RecognizeMethod::RadmmGray => (RecognitionMethod::RadmmGray, "radmm-gray"),
    };
    let eval = evaluate(&ds, &train, &test, method, a.l, (a.alpha, a.beta, a.iters), a.seed, a.ridge)?;

    fs::create_dir_all(&a.out_dir)?;
    let mut wtr = csv::Writer::from_path(a.out_dir.join("predictions.csv"))?;
    wtr.write_record(["probe_path", "predicted_label", "true_label", "score"])?;
    for p in &eval.predictions {
        wtr.write_record([
            ds.paths[p.probe].clone(),
            p.predicted_label.to_string(),
            p.true_label.to_string(),
            p.score.to_string(),
        ])?;
    }
    wtr.flush()?;
    let report = RecognizeReport {
        method: name,
        l: a.l,
        iters: a.iters,
        seed: a.seed,
        accuracy: eval.accuracy,
        training_residual: eval.training_residual,
        train_images: train.len(),
        probes: test.len(),
        elapsed_ms: a.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    write_json(&a.out_dir.join("report.json"), &report)?;
    println!("{name} accuracy={:.4} ({} probes)", eval.accuracy, test.len());
    Ok(0)
}

pub fn check(a: &CheckArgs) -> Result<u8> {
    let outcomes = run_suite(&a.suite, a.seed)?;
    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.passed() { "PASS" } else { "FAIL" };
        if !o.passed() {
            failed += 1;
        }
        // Adding 0.0 folds a negative zero into +0.
        println!("{tag} {}: {} (measured {:e}, tolerance {:e})", o.suite, o.name, o.measured + 0.0, o.tolerance);
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

pub fn gen_corpus(a: &GenCorpusArgs) -> Result<u8> {
    let corpus = synthetic_corpus(a.seed, a.identities, a.per_identity, a.width, a.height, a.rank, a.eta)?;
    write_corpus(&corpus.dataset, &a.out)?;
    println!(
        "wrote {} images of {} identities to {}",
        corpus.dataset.len(),
        a.identities,
        a.out.display()
    );
    Ok(0)
}
