use std::path::PathBuf;
use std::process::ExitCode;

use clap::{builder::PossibleValuesParser, Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Quasi non-negative quaternion matrix factorization experiments.
#[derive(Parser, Debug)]
#[command(name = "quatfact", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Factorize a color image and report reconstruction quality.
    Factorize(FactorizeArgs),
    /// Train on a face corpus and classify its probes.
    Recognize(RecognizeArgs),
    /// Run a property suite and print one line per invariant.
    Check(CheckArgs),
    /// Write a synthetic face corpus with a manifest.
    GenCorpus(GenCorpusArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Qipgm,
    Qadmm,
    Ripgm,
    Radmm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Basic,
    Improved,
}

#[derive(Args, Debug)]
pub struct FactorizeArgs {
    /// Input image (PPM; PNG when built with the `png` feature).
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Inner rank.
    #[arg(long)]
    pub l: usize,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Armijo contraction (projected gradient only; default 0.01).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Sufficient-decrease constant (projected gradient only; default 0.001).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Line-search variant (projected gradient only; default improved).
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    /// W penalty (ADMM only; default 0.01).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// H penalty (ADMM only; default 0.01).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write the clamped reconstruction to this path.
    #[arg(long)]
    pub reconstruct: Option<PathBuf>,
    /// Record wall-clock timings (makes outputs run-dependent).
    #[arg(long)]
    pub timing: bool,
    /// Add the conventional 10 log10(255^2 / MSE) PSNR to the report.
    #[arg(long)]
    pub psnr_conventional: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RecognizeMethod {
    QadmmColor,
    RadmmColor,
    RadmmGray,
}

#[derive(Args, Debug)]
pub struct RecognizeArgs {
    /// Manifest CSV with `path,label[,split]` columns.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "qadmm-color")]
    pub method: RecognizeMethod,
    #[arg(long)]
    pub l: usize,
    #[arg(long, default_value_t = 4)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    /// Ridge added to the Gram matrix when encoding probes.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Training images per identity when the manifest has no split column.
    #[arg(long)]
    pub eta: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Classify the training images themselves.
    #[arg(long)]
    pub train_equals_test: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(value_parser = PossibleValuesParser::new(quatfact_core::checks::SUITES))]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub identities: usize,
    #[arg(long, default_value_t = 5)]
    pub per_identity: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    /// Rank of the generating basis.
    #[arg(long, default_value_t = 25)]
    pub rank: usize,
    /// Images per identity marked for training.
    #[arg(long, default_value_t = 3)]
    pub eta: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit status by error category.
fn exit_code(err: &anyhow::Error) -> u8 {
    use quatfact_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Config(_)) => 2,
        Some(E::Io(_) | E::Csv(_) | E::Parse { .. } | E::Manifest(_) | E::Unsupported(_)) => 3,
        Some(E::Dimension { .. } | E::Domain(_) | E::Singular(_)) => 4,
        None if err.downcast_ref::<std::io::Error>().is_some() => 3,
        None => 1,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("QUATFACT_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| quatfact_core::Error::Config(format!("QUATFACT_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(quatfact_core::Error::Config("QUATFACT_THREADS must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Factorize(a) => commands::factorize(&a),
        Command::Recognize(a) => commands::recognize(&a),
        Command::Check(a) => commands::check(&a),
        Command::GenCorpus(a) => commands::gen_corpus(&a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
