//! `damage-sim`: runs damage scenarios and writes CSV/JSON outputs.
//!
//! Exit codes: 0 success, 2 an inequality or consistency check failed,
//! 1 configuration, solver or I/O error.

mod config;
mod export;
mod pipeline;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pipeline::{run_scenario, RunMode, RunOptions, EXIT_ERROR};

#[derive(Debug, Parser)]
#[command(name = "damage-sim", version, about = "Phase-field damage scenario runner")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Scenario file (TOML with dotted keys).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Run mode; defaults to the scenario's own mode.
    #[arg(long, value_enum)]
    mode: Option<RunMode>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance override `KEY=VALUE`, e.g. `inner=1e-12`; repeatable.
    #[arg(long = "tol-override", value_name = "KEY=VALUE")]
    tol_override: Vec<String>,
    /// Seed for the randomized parts of the checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall time in the manifest (makes it run dependent).
    #[arg(long)]
    record_timing: bool,
    /// δ values of the regularization demo; repeatable.
    #[arg(long)]
    delta: Vec<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs several scenario files in parallel, one process each, capped by
    /// `DAMAGE_SIM_THREADS`.
    Sweep {
        /// Parent directory; each run writes into a subdirectory named after
        /// its file stem.
        #[arg(long)]
        out: PathBuf,
        /// Extra arguments passed to every run, e.g. `--mode validate`.
        #[arg(long = "arg", allow_hyphen_values = true)]
        extra: Vec<String>,
        configs: Vec<PathBuf>,
    },
    /// Prints a built-in scenario as a scenario file.
    PrintPreset { name: String },
}

fn run(args: RunArgs) -> Result<i32, String> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), None) => config::load_spec(path)?,
        (None, Some(name)) => config::preset_spec(name)?,
        _ => return Err("exactly one of --config or --preset is required".into()),
    };
    config::apply_overrides(&mut spec, &args.tol_override)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = args.out.ok_or("--out is required")?;
    if std::fs::read_dir(&out).is_ok_and(|mut d| d.next().is_some()) {
        eprintln!("warning: {} is not empty; only files listed in manifest.json belong to this run", out.display());
    }
    let mode = args.mode.unwrap_or_else(|| RunMode::from_spec(spec.mode));
    let opts = RunOptions { record_timing: args.record_timing, deltas: args.delta };
    let manifest = run_scenario(&spec, mode, &out, &opts)?;
    for c in manifest.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} (value {:?}, threshold {:?})", c.name, c.value, c.threshold);
    }
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    Ok(manifest.exit_status)
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for failed checks.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Some(Command::Sweep { out, extra, configs }) => sweep::sweep(&configs, &out, &extra),
        Some(Command::PrintPreset { name }) => config::preset_spec(&name).and_then(|s| config::to_toml(&s)).map(|t| {
            print!("{t}");
            0
        }),
        None => run(cli.run),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
