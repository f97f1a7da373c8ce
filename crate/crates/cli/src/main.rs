//! `cits`: simulate benchmark series, infer causal graphs, run the
//! evaluation grid and preprocess spike trains.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cits_core::{CiTestKind, Method, SimKind};
use clap::{Args, Parser, Subcommand};

use config::{FileConfig, SizeLimit};

#[derive(Parser, Debug)]
#[command(
    name = "cits",
    version,
    about = "Causal discovery in stationary time series"
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for simulation and permutation streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trials of a benchmark model to CSV.
    Simulate(SimulateArgs),
    /// Estimate graphs from time-series CSV files.
    Infer(InferArgs),
    /// Run the model x method x eta x alpha evaluation grid.
    Bench(BenchArgs),
    /// Turn a spike-time file into smoothed per-trial PSTH CSVs.
    Preprocess(PreprocessArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: Option<SimKind>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// File name prefix (defaults to the model name).
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Time-series CSV files with a header row of labels.
    inputs: Vec<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Conditional dependence test for cits.
    #[arg(long, value_parser = parse_test)]
    test: Option<CiTestKind>,
    /// Largest conditioning set, or `unlimited`.
    #[arg(long)]
    max_conditioning_size: Option<SizeLimit>,
    #[arg(long)]
    permutations: Option<usize>,
    /// Also condition on nodes in the target time slice.
    #[arg(long)]
    full_window: bool,
    /// Attach regression edge weights (cits only).
    #[arg(long)]
    weights: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<SimKind>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    max_conditioning_size: Option<SizeLimit>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    /// Write every per-trial rolled graph next to the cell results.
    #[arg(long)]
    dump_graphs: bool,
    /// Reuse finished cells found in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Spike file: a neuron id then spike times in seconds, one neuron per line.
    input: Option<PathBuf>,
    #[arg(long)]
    span_seconds: Option<f64>,
    #[arg(long)]
    bin_ms: Option<f64>,
    #[arg(long)]
    bandwidth_ms: Option<f64>,
    /// Read the bandwidth as a full width at half maximum.
    #[arg(long)]
    fwhm: bool,
    #[arg(long)]
    active_fraction: Option<f64>,
    #[arg(long)]
    trial_seconds: Option<f64>,
    #[arg(long)]
    stem: Option<String>,
}

fn parse_test(s: &str) -> Result<CiTestKind, String> {
    match s {
        "partial-correlation" | "gaussian" => Ok(CiTestKind::PartialCorrelation),
        "hilbert-schmidt" | "hs" => Ok(CiTestKind::HilbertSchmidt),
        _ => Err(format!(
            "unknown test '{s}' (partial-correlation, hilbert-schmidt)"
        )),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let jobs = cli
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("starting worker pool")?;
    let out = |name: &str| {
        cli.out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(name))
    };

    match cli.command {
        Command::Simulate(a) => {
            let mut c = file.simulate.unwrap_or_default();
            set(&mut c.model, a.model);
            set(&mut c.eta, a.eta);
            set(&mut c.trials, a.trials);
            c.n = a.n.or(c.n);
            c.stem = a.stem.or(c.stem);
            commands::simulate(&c, seed, jobs, &out("simulate"))
        }
        Command::Infer(a) => {
            let mut c = file.infer.unwrap_or_default();
            if !a.inputs.is_empty() {
                c.inputs = a.inputs;
            }
            set(&mut c.method, a.method);
            set(&mut c.tau, a.tau);
            set(&mut c.alpha, a.alpha);
            set(&mut c.test, a.test);
            set(&mut c.max_conditioning_size, a.max_conditioning_size);
            set(&mut c.permutations, a.permutations);
            c.full_window |= a.full_window;
            c.weights |= a.weights;
            commands::infer(&c, seed, jobs, &out("infer"))
        }
        Command::Bench(a) => {
            let mut c = file.bench.unwrap_or_default();
            set(&mut c.models, a.models);
            set(&mut c.methods, a.methods);
            set(&mut c.etas, a.etas);
            set(&mut c.alphas, a.alphas);
            set(&mut c.trials, a.trials);
            set(&mut c.tau, a.tau);
            set(&mut c.max_conditioning_size, a.max_conditioning_size);
            set(&mut c.permutations, a.permutations);
            c.n = a.n.or(c.n);
            c.dump_graphs |= a.dump_graphs;
            commands::bench(&c, seed, jobs, &out("bench"), a.resume)
        }
        Command::Preprocess(a) => {
            let mut c = file.preprocess.unwrap_or_default();
            c.input = a.input.or(c.input);
            c.span_seconds = a.span_seconds.or(c.span_seconds);
            c.stem = a.stem.or(c.stem);
            set(&mut c.psth.bin_ms, a.bin_ms);
            set(&mut c.psth.smooth_bandwidth_ms, a.bandwidth_ms);
            set(&mut c.psth.active_fraction, a.active_fraction);
            set(&mut c.psth.trial_seconds, a.trial_seconds);
            c.psth.bandwidth_is_fwhm |= a.fwhm;
            commands::preprocess(&c, seed, jobs, &out("preprocess"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
