use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sopool::config::RunConfig;
use sopool::pn::{PNConfig, PoolKind};
use sopool::spectral::SpectralPath;
use sopool::verify::{cmd_verify, VerifyOptions};
use sopool::{bench, demo, pipeline, Error};

/// Second-order co-occurrence pooling with power normalization.
#[derive(Debug, Parser)]
#[command(name = "sopool", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pool a d×H×W (or d×N with --grid) tensor file into Ψ.
    Pool(PoolArgs),
    /// Run the verification suites; exit code 0 iff all pass.
    Verify(VerifyArgs),
    /// Time element-wise against spectral SigmE pooling.
    Bench(BenchArgs),
    /// Train a small classifier on synthetic location-coded data.
    DemoTrain(DemoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PathArg {
    Eigen,
    ClosedForm,
}

#[derive(Debug, Args)]
struct PoolingArgs {
    /// average, gamma, maxexp, sigme, sigme-trace or asinhe.
    #[arg(long, default_value = "sigme")]
    kind: PoolKind,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 20.0)]
    eta: f64,
    #[arg(long = "eta-prime", default_value_t = 20.0)]
    eta_prime: f64,
    #[arg(long = "gamma-prime", default_value_t = 10.0)]
    gamma_prime: f64,
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    kappa: f64,
    /// Pivots per spatial coordinate (0 disables spatial codes).
    #[arg(long = "Z", default_value_t = 5)]
    z: usize,
    /// Pivot bandwidth; defaults to the pivot spacing.
    #[arg(long)]
    sigma: Option<f64>,
    /// Multiply the output by (trace + λ)^e.
    #[arg(long = "trace-comp")]
    trace_comp: bool,
    #[arg(long = "trace-comp-exponent", default_value_t = 0.5)]
    trace_comp_exponent: f64,
    /// Add κ·M to the output.
    #[arg(long)]
    residual: bool,
    /// Pool on the eigenvalues (eigen path unless closed-form is given).
    #[arg(long, num_args = 0..=1, default_missing_value = "eigen", value_name = "PATH")]
    spectral: Option<PathArg>,
}

impl PoolingArgs {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            pn: PNConfig {
                kind: self.kind,
                gamma: self.gamma,
                eta: self.eta,
                gamma_prime: self.gamma_prime,
                eta_prime: self.eta_prime,
                lambda: self.lambda,
                beta: self.beta,
                kappa: self.kappa,
                trace_comp: self.trace_comp,
                trace_comp_exponent: self.trace_comp_exponent,
                residual: self.residual,
            },
            z: self.z,
            sigma: self.sigma,
            alpha: self.alpha,
            spectral: self.spectral.map(|p| match p {
                PathArg::Eigen => SpectralPath::Eigen,
                PathArg::ClosedForm => SpectralPath::ClosedForm,
            }),
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct PoolArgs {
    /// Input SOP1 tensor file.
    input: PathBuf,
    /// Where to write Ψ (f64 SOP1 file).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Grid layout of a rank-2 input's columns.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    grid: Option<Vec<usize>>,
    #[command(flatten)]
    pooling: PoolingArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Run only this suite (or suite family, e.g. "probmodel").
    #[arg(long)]
    suite: Option<String>,
    /// Negate the MaxExp derivative (checks that the gradient suite fails).
    #[arg(long = "break-sign")]
    break_sign: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per gradient-check configuration.
    #[arg(long, default_value_t = 8)]
    instances: usize,
    #[command(flatten)]
    pooling: PoolingArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64, 128, 256, 512])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pooling: PoolingArgs,
}

fn emit<T: Serialize>(value: &T) -> Result<(), Error> {
    let line = serde_json::to_string(value).map_err(|e| Error::Invariant(format!("JSON encoding failed: {e}")))?;
    println!("{line}");
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("SOPOOL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("SOPOOL_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))
}

/// Exit code 0 on success; verification failures exit with 2.
fn run(cli: Cli) -> Result<u8, Error> {
    configure_threads()?;
    match cli.command {
        Command::Pool(args) => {
            let mut cfg = args.pooling.run_config();
            cfg.input = Some(args.input);
            cfg.output = args.output;
            cfg.grid = args.grid.map(|g| (g[0], g[1]));
            let (_, summary) = pipeline::cmd_pool(&cfg)?;
            emit(&summary)?;
        }
        Command::Verify(args) => {
            let cfg = args.pooling.run_config();
            cfg.validate()?;
            let opts = VerifyOptions {
                suite: args.suite,
                break_sign: args.break_sign,
                seed: args.seed,
                instances: args.instances,
            };
            let reports = cmd_verify(&cfg.pn, &opts)?;
            for r in &reports {
                emit(r)?;
            }
            let passed = reports.iter().all(|r| r.passed);
            emit(&serde_json::json!({ "command": "verify", "passed": passed, "suites": reports.len() }))?;
            if !passed {
                return Ok(2);
            }
        }
        Command::Bench(args) => {
            let table = bench::cmd_bench(&args.dims, args.reps, args.seed)?;
            for row in &table.rows {
                emit(row)?;
            }
            for ratio in &table.ratios {
                emit(ratio)?;
            }
        }
        Command::DemoTrain(args) => {
            let mut cfg = args.pooling.run_config();
            cfg.epochs = args.epochs;
            cfg.classes = args.classes;
            cfg.lr = args.lr;
            cfg.seed = args.seed;
            let report = demo::cmd_demo_train(&cfg)?;
            for (epoch, loss) in report.loss_curve.iter().enumerate() {
                emit(&serde_json::json!({ "epoch": epoch, "loss": loss }))?;
            }
            emit(&report)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
