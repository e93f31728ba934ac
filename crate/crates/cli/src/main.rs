//! `nldp`: experiment driver for nonlocal double-phase operators.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::Artifacts;

const DEFAULT_OUT: &str = "nldp-out";

#[derive(Parser, Debug)]
#[command(name = "nldp", version, about = "Nonlocal double-phase operators: evaluation, constants and regularity probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Artifact directory; overrides `output_dir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Config override `key.path=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check the problem data and report its derived quantities.
    Validate,
    /// Evaluate the operator at the configured points.
    Eval,
    /// Select eta and kappa and derive sigma, theta and gamma.
    Constants,
    /// Compare both sides of the rescaling identity.
    ScalingTest,
    /// Fuzz the elementary and second-difference inequalities.
    CheckInequalities,
    /// Solve the exterior problem on a grid.
    Solve,
    /// Fit an oscillation-decay exponent.
    Holder,
    /// Solve, select constants and run the dyadic iteration.
    Pipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Eval => "eval",
            Command::Constants => "constants",
            Command::ScalingTest => "scaling-test",
            Command::CheckInequalities => "check-inequalities",
            Command::Solve => "solve",
            Command::Holder => "holder",
            Command::Pipeline => "pipeline",
        }
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    match cli.command {
        Command::Validate => commands::validate(cfg, out),
        Command::Eval => commands::eval(cfg, out),
        Command::Constants => commands::constants(cfg, out),
        Command::ScalingTest => commands::scaling_test(cfg, out),
        Command::CheckInequalities => commands::check_inequalities(cfg, out),
        Command::Solve => commands::solve_cmd(cfg, out),
        Command::Holder => commands::holder(cfg, out),
        Command::Pipeline => commands::pipeline(cfg, out),
    }
}

/// `--out DIR` as written on the command line, for errors raised before parsing succeeds.
fn raw_out_dir() -> PathBuf {
    let args: Vec<String> = std::env::args().collect();
    for (i, a) in args.iter().enumerate() {
        if let Some(v) = a.strip_prefix("--out=") {
            return PathBuf::from(v);
        }
        if a == "--out" {
            if let Some(v) = args.get(i + 1) {
                return PathBuf::from(v);
            }
        }
    }
    PathBuf::from(DEFAULT_OUT)
}

fn fail(out: &Artifacts, err: CliError) -> ExitCode {
    eprintln!("error: {err}");
    if let Err(e) = out.error(&err) {
        eprintln!("error: could not write error.json: {e}");
    }
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NLDP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let out = Artifacts::new(&raw_out_dir(), "none", None, None);
            return fail(&out, CliError::Config(e.kind().to_string()));
        }
    };
    let name = cli.command.name();
    let early_out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let Some(path) = &cli.config else {
        return fail(&Artifacts::new(&early_out, name, None, None), CliError::Config("--config is required".into()));
    };
    let mut cfg = match ExperimentConfig::load(path, &cli.set) {
        Ok(c) => c,
        Err(e) => return fail(&Artifacts::new(&early_out, name, None, None), e),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let hash = cfg.hash();
    let mut out = Artifacts::new(&dir, name, Some(&hash), Some(cfg.seed));
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&out, CliError::Config(format!("thread pool: {e}")));
        }
    }
    out.clear_error();
    log::info!("{name}: config hash {hash}, artifacts in {}", dir.display());
    let result = run(&cli, &cfg, &mut out);
    for p in out.written() {
        log::info!("wrote {}", p.display());
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&out, e),
    }
}
