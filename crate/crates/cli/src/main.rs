//! `gdstab`: run experiment configs and bound audits from the command line.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 audit violation beyond
//! tolerance, 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gdstab_core::bounds::format_table;
use gdstab_core::experiments::{self, ExperimentConfig, RunArtifact, RunStatus, Scenario};
use gdstab_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_VIOLATION: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "gdstab", version, about = "Gradient-descent stability and generalisation audits for shallow networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config (or the config stored in a manifest).
    Run(RunArgs),
    /// Run several configs, or the expansion of a sweep config, concurrently.
    Sweep(SweepArgs),
    /// Parse and validate a config without running it.
    ValidateConfig(ConfigArgs),
    /// Print the realised bound constants of a config.
    ShowConstants(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `gd.t_max`, e.g. for a longer co-coercivity probe horizon.
    #[arg(long)]
    t_max: Option<usize>,
    /// Allow step sizes above `1/(2 rho)`.
    #[arg(long)]
    override_eta_limit: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// One sweep config, or several plain configs.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    override_eta_limit: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn load(path: &Path, seed: Option<u64>, t_max: Option<usize>, override_eta: bool) -> Result<ExperimentConfig, Error> {
    let mut c = experiments::load_config(path)?;
    if let Some(s) = seed {
        c.master_seed = s;
    }
    if let Some(t) = t_max {
        c.gd.t_max = t;
    }
    c.override_eta_limit |= override_eta;
    Ok(c)
}

fn set_workers(workers: Option<usize>) -> Result<(), Error> {
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn print_artifact(a: &RunArtifact) {
    print!("{}", format_table(&a.reports));
    if let Some(dir) = &a.dir {
        println!("artifact: {}", dir.display());
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let c = &args.common;
    let mut config = match load(&c.config, c.seed, c.t_max, c.override_eta_limit) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    if let Err(e) = set_workers(args.workers) {
        return fail(&e);
    }
    if config.scenario == Scenario::Sweep {
        let out = config.output_dir.clone();
        return match experiments::expand_sweep(&config) {
            Ok(configs) => run_sweep(&configs, out),
            Err(e) => fail(&e),
        };
    }
    match experiments::run(&config) {
        Ok(a) => {
            print_artifact(&a);
            if a.violations() > 0 {
                ExitCode::from(EXIT_VIOLATION)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(&e),
    }
}

fn run_sweep(configs: &[ExperimentConfig], out: Option<PathBuf>) -> ExitCode {
    let (index, artifacts) = match experiments::sweep(configs, out.as_deref()) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    for (entry, art) in index.entries.iter().zip(&artifacts) {
        match (&entry.status, art) {
            (RunStatus::Ok, Some(a)) => {
                println!("run {} ({}, seed {}): ok, {} violation(s)", entry.index, entry.scenario.as_str(), entry.master_seed, a.violations());
                print!("{}", format_table(&a.reports));
            }
            _ => println!(
                "run {} ({}, seed {}): failed: {}",
                entry.index,
                entry.scenario.as_str(),
                entry.master_seed,
                entry.cause.as_deref().unwrap_or("unknown")
            ),
        }
    }
    if let Some(o) = &out {
        println!("index: {}", o.join("index.json").display());
    }
    let worst = index
        .entries
        .iter()
        .map(|e| match (e.status, e.failure_kind.as_deref()) {
            (RunStatus::Failed, Some("numeric")) => EXIT_NUMERIC,
            (RunStatus::Failed, _) => EXIT_CONFIG,
            (RunStatus::Ok, _) if e.violations > 0 => EXIT_VIOLATION,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    ExitCode::from(worst)
}

fn cmd_sweep(args: SweepArgs) -> ExitCode {
    if let Err(e) = set_workers(args.workers) {
        return fail(&e);
    }
    let mut configs = Vec::new();
    for path in &args.config {
        let cfg = match load(path, args.seed, args.t_max, args.override_eta_limit) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        if cfg.scenario == Scenario::Sweep {
            match experiments::expand_sweep(&cfg) {
                Ok(v) => configs.extend(v),
                Err(e) => return fail(&e),
            }
        } else {
            configs.push(cfg);
        }
    }
    run_sweep(&configs, args.out)
}

fn cmd_validate(args: ConfigArgs) -> ExitCode {
    match load(&args.config, args.seed, args.t_max, args.override_eta_limit).and_then(|c| c.validate().map(|()| c)) {
        Ok(c) => {
            println!("{}: valid {} config", args.config.display(), c.scenario.as_str());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn cmd_constants(args: ConfigArgs) -> ExitCode {
    match load(&args.config, args.seed, args.t_max, args.override_eta_limit).and_then(|c| experiments::constants(&c)) {
        Ok(map) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            for (k, v) in &map {
                println!("{k:<width$}  {v:.6e}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ValidateConfig(a) => cmd_validate(a),
        Command::ShowConstants(a) => cmd_constants(a),
    }
}
