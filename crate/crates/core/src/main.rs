use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hypertune::acquisition::AcquisitionKind;
use hypertune::config::{ConfigError, OptimizerKind, RunConfig};
use hypertune::metrics::{evaluate_pair, Image, SsimConfig, SsimWindow};
use hypertune::runner::compare::{self, CompareSpec};
use hypertune::runner::replay::{replay_dir, AuditError};
use hypertune::runner::{optimize, RunStatus, RunnerError};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hypertune",
    version,
    about = "Lattice hyperparameter search: GP-UCB/PI, COBYLA-style and PSO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer and persist its artifacts.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        optimizer: Option<OptimizerKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_evals: Option<usize>,
        /// Parent directory for the timestamped run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        acquisition: Option<AcquisitionKind>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run several optimizers over several seeds with the same budget.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. `bo,cobyla,pso`.
        #[arg(long, default_value = "bo,cobyla,pso")]
        optimizers: String,
        /// Inclusive range `1..20` or a list `1,2,3`.
        #[arg(long, default_value = "1..20")]
        seeds: String,
        #[arg(long)]
        budget: Option<usize>,
        /// Concurrent cells; `HYPERTUNE_JOBS` takes precedence.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print MSE, PSNR and SSIM of two 8-bit PNG images as JSON.
    EvalMetrics {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "gaussian_11x11")]
        window: SsimWindow,
    },
    /// Audit a run directory; BO proposals are re-derived step by step.
    Replay { dir: PathBuf },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load(path: &PathBuf) -> Result<RunConfig, ExitCode> {
    RunConfig::load(path).map_err(|e| fail(EXIT_CONFIG, e))
}

fn runner_exit(e: RunnerError) -> ExitCode {
    match e {
        RunnerError::Config(e) => fail(EXIT_CONFIG, e),
        other => fail(EXIT_FAILED, other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Optimize {
            config,
            optimizer,
            seed,
            max_evals,
            out,
            acquisition,
            lambda,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(o) = optimizer {
                cfg.optimizer = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = max_evals {
                cfg.max_evals = n;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if acquisition.is_some() || lambda.is_some() {
                let bo = cfg.bo.get_or_insert_with(Default::default);
                if let Some(kind) = acquisition {
                    bo.acquisition.kind = kind;
                }
                if let Some(l) = lambda {
                    bo.acquisition.lambda = l;
                }
            }
            if let Err(e) = cfg.validate() {
                return fail(EXIT_CONFIG, e);
            }
            match optimize(&cfg) {
                Ok(s) => {
                    println!("run: {}", s.dir.display());
                    if let Some(b) = &s.report.best {
                        println!(
                            "best: {} score={} ({} evaluations)",
                            serde_json::Value::Object(b.params.clone()),
                            b.score,
                            s.report.evaluations
                        );
                    }
                    if s.report.status == RunStatus::Aborted {
                        return fail(
                            EXIT_FAILED,
                            format!(
                                "run aborted: {}",
                                s.report.error.as_deref().unwrap_or("unknown error")
                            ),
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => runner_exit(e),
            }
        }
        Command::Compare {
            config,
            optimizers,
            seeds,
            budget,
            jobs,
            out,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let spec = match (
                compare::parse_optimizers(&optimizers),
                compare::parse_seeds(&seeds),
            ) {
                (Ok(optimizers), Ok(seeds)) => CompareSpec {
                    optimizers,
                    seeds,
                    budget: budget.unwrap_or(cfg.max_evals),
                    jobs: compare::resolve_jobs(jobs),
                },
                (Err(e), _) | (_, Err(e)) => return fail(EXIT_CONFIG, ConfigError::Invalid(e)),
            };
            match compare::compare(&cfg, &spec) {
                Ok(c) => {
                    print!("{}", compare::render_table(&c));
                    println!("comparison: {}", c.dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => runner_exit(e),
            }
        }
        Command::EvalMetrics { a, b, window } => {
            let imgs = Image::from_png(&a).and_then(|x| Image::from_png(&b).map(|y| (x, y)));
            let cfg = SsimConfig {
                window,
                ..SsimConfig::default()
            };
            match imgs.and_then(|(x, y)| evaluate_pair(&x, &y, &cfg)) {
                Ok(report) => {
                    println!("{}", serde_json::to_string(&report).expect("serializable"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_FAILED, e),
            }
        }
        Command::Replay { dir } => match replay_dir(&dir) {
            Ok(r) => {
                let what = if r.proposals_replayed {
                    "every proposal reproduced"
                } else {
                    "lattice, trace and report consistent"
                };
                println!(
                    "ok: {} run, {} evaluations, {} failures; {what}",
                    r.optimizer, r.evaluations, r.failures
                );
                ExitCode::SUCCESS
            }
            Err(e @ AuditError::Unreadable(_)) => fail(EXIT_CONFIG, e),
            Err(e) => fail(EXIT_DIVERGED, e),
        },
    }
}
