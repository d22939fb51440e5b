//! `meint`: simulate, fit, predict, evaluate and benchmark the M-E interaction
//! pipeline from the command line.

mod audit;
mod commands;
mod config;
mod output;
mod prescreen;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use meint::pipeline::Variant;
use meint::simbench::{CorrStructure, Placement, Signal, ThetaPattern};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values; exit status 2.
    Usage(String),
    /// Reading inputs or writing artifacts failed; exit status 1.
    Io(String),
    /// A pipeline stage failed; exit status 1.
    Stage { stage: &'static str, source: meint::error::Error },
    /// A post-hoc invariant audit failed; exit status 3.
    Audit(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Stage { .. } => 1,
            CliError::Audit(_) => 3,
        }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(meint::error::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Stage { stage, source } => write!(f, "stage '{stage}' failed: {source}"),
            CliError::Audit(m) => write!(f, "audit failed: {m}"),
        }
    }
}

fn parse_named<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "meint", version, about = "Molecular x environment interaction analysis with regulatory modules")]
struct Cli {
    /// TOML file with [simulate], [pipeline], [evaluate] and [benchmark] sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed; determines every random draw of the run.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "meint-out")]
    out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Pipeline variant.
    #[arg(long, global = true, value_parser = parse_named::<Variant>)]
    variant: Option<Variant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset with planted modules and effects.
    Simulate(SimArgs),
    /// Fit the pipeline to a dataset.
    Fit(FitArgs),
    /// Score a dataset with a saved model.
    Predict(PredictArgs),
    /// Repeated random-split prediction and selection stability.
    Evaluate(EvaluateArgs),
    /// Replicate simulation study comparing variants.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Default)]
pub struct SimArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Number of environmental factors.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_parser = parse_named::<ThetaPattern>)]
    theta: Option<ThetaPattern>,
    #[arg(long, value_parser = parse_named::<CorrStructure>)]
    corr: Option<CorrStructure>,
    #[arg(long, value_parser = parse_named::<Placement>)]
    placement: Option<Placement>,
    #[arg(long, value_parser = parse_named::<Signal>)]
    signal: Option<Signal>,
    /// Scale factor applied to p, q and the module count.
    #[arg(long)]
    scale: Option<f64>,
    /// Target censoring fraction; simulates a survival outcome.
    #[arg(long)]
    censoring: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TuningArgs {
    /// Fixed group penalty; needs --lambda2 and skips EBIC tuning.
    #[arg(long)]
    lambda1: Option<f64>,
    /// Fixed individual-feature penalty.
    #[arg(long)]
    lambda2: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset manifest (TOML naming the CSV files).
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Keep the K molecular columns with the smallest marginal p-values.
    #[arg(long, value_name = "K")]
    prescreen: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Number of random splits.
    #[arg(long)]
    splits: Option<usize>,
    /// Training share of each split.
    #[arg(long)]
    ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', value_parser = parse_named::<Variant>)]
    variants: Option<Vec<Variant>>,
}

impl SimArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.simulate;
        macro_rules! set {
            ($($field:ident => $target:ident),*) => { $(if let Some(v) = self.$field { s.$target = v; })* };
        }
        set!(n => n, p => p, q => q, m => m, theta => theta_pattern, corr => corr,
             placement => placement, signal => signal, scale => scale_factor);
        if self.censoring.is_some() {
            s.censoring = self.censoring;
        }
    }
}

impl TuningArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.lambda1.is_some() {
            cfg.pipeline.lambda1 = self.lambda1;
        }
        if self.lambda2.is_some() {
            cfg.pipeline.lambda2 = self.lambda2;
        }
    }
}

/// Layers flags over the config file and propagates the root seed.
fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(v) = cli.variant {
        cfg.variant = v;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.command {
        Command::Simulate(a) => a.apply(&mut cfg),
        Command::Fit(a) => {
            a.tuning.apply(&mut cfg);
            if a.prescreen.is_some() {
                cfg.prescreen = a.prescreen;
            }
        }
        Command::Predict(_) => {}
        Command::Evaluate(a) => {
            a.tuning.apply(&mut cfg);
            if let Some(s) = a.splits {
                cfg.evaluate.splits = s;
            }
            if let Some(r) = a.ratio {
                cfg.evaluate.ratio = r;
            }
        }
        Command::Benchmark(a) => {
            a.sim.apply(&mut cfg);
            if let Some(r) = a.replicates {
                cfg.benchmark.replicates = r;
            }
            if let Some(v) = &a.variants {
                cfg.benchmark.variants = v.clone();
            }
        }
    }
    cfg.simulate.seed = cfg.seed;
    cfg.pipeline.bicluster.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    meint::par::with_threads(cfg.threads, || match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, &cli.out),
        Command::Fit(a) => commands::fit(&cfg, &cli.out, &a.manifest),
        Command::Predict(a) => commands::predict(&cfg, &cli.out, &a.model, &a.manifest),
        Command::Evaluate(a) => commands::evaluate(&cfg, &cli.out, &a.manifest),
        Command::Benchmark(_) => commands::benchmark(&cfg, &cli.out),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meint: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
