//! `simulate`: run or validate a scenario and write CSV trajectories.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinbath::scenario::{is_config_error, run_scenario, validate_config, ScenarioConfig};
use spinbath::Error;

/// Environment variable that sets the worker thread count.
const THREADS_ENV: &str = "SPINBATH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "simulate", version, about = "Surrogate Hamiltonian spin-bath scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    args: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario (the default).
    Run(RunArgs),
    /// Check a configuration and print warnings without running it.
    Validate(RunArgs),
}

#[derive(clap::Args, Debug, Clone, Default)]
struct RunArgs {
    /// Built-in scenario: fig2..fig6 or its kind name (e.g. dissipation).
    #[arg(long)]
    scenario: Option<String>,
    /// TOML configuration file; replaces the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set bath.modes=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (also `SPINBATH_THREADS`).
    #[arg(long)]
    threads: Option<usize>,
    /// Shorthand for `--set bath.modes=K`.
    #[arg(long)]
    modes: Option<usize>,
    /// Shorthand for `--set sweep.eps0=[...]`. Repeatable.
    #[arg(long)]
    eps0: Vec<f64>,
}

fn load(args: &RunArgs) -> Result<ScenarioConfig, Error> {
    let src = match (&args.config, &args.scenario) {
        (Some(path), _) => std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        (None, Some(name)) => ScenarioConfig::builtin_source(name)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{name}' (expected fig2..fig6)")))?
            .to_string(),
        (None, None) => return Err(Error::Config("give --scenario or --config".into())),
    };
    let mut overrides = Vec::new();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(k) = args.modes {
        overrides.push(format!("bath.modes={k}"));
    }
    if !args.eps0.is_empty() {
        let list: Vec<String> = args.eps0.iter().map(|e| format!("{e:?}")).collect();
        overrides.push(format!("sweep.eps0=[{}]", list.join(",")));
    }
    overrides.extend(args.overrides.iter().cloned());
    let cfg = ScenarioConfig::from_toml_with_overrides(&src, &overrides)?;
    if let (Some(path), Some(name)) = (&args.config, &args.scenario) {
        if let Some(builtin) = ScenarioConfig::builtin_source(name) {
            let kind = ScenarioConfig::from_toml(builtin)?.scenario;
            if kind != cfg.scenario {
                return Err(Error::Config(format!(
                    "{} is a {:?} scenario, not {name}",
                    path.display(),
                    cfg.scenario
                )));
            }
        }
    }
    Ok(cfg)
}

fn init_threads(requested: Option<usize>) -> Result<(), Error> {
    let n = match requested {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    if is_config_error(e) {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (validate_only, args) = match cli.command {
        Some(Command::Run(a)) => (false, a),
        Some(Command::Validate(a)) => (true, a),
        None => (false, cli.args),
    };
    let cfg = match init_threads(args.threads).and_then(|_| load(&args)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if validate_only {
        let report = validate_config(&cfg);
        for w in &report.warnings {
            println!("warning: {w}");
        }
        for e in &report.errors {
            println!("error: {e}");
        }
        return if report.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(2) };
    }
    match run_scenario(&cfg, &args.out) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
