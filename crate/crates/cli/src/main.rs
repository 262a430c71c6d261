use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reconfig::sim::OptimizerKind;
use reconfig_cli::commands;
use reconfig_cli::files::{to_json, write_atomic, SummaryDoc};
use reconfig_cli::manifest::{unknown_optimizer, Overrides};
use reconfig_cli::{CliError, Problem};

#[derive(Parser)]
#[command(
    name = "reconfig",
    version,
    about = "Simulate and compare stream-processing reconfiguration optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// Seed for workload generation and every optimizer.
    #[arg(long)]
    seed: Option<u64>,
    /// Migration budget as a number of moved key groups per round.
    #[arg(long, conflicts_with = "max_migr_cost")]
    max_migrations: Option<usize>,
    /// Migration budget as summed migration cost per round.
    #[arg(long, allow_hyphen_values = true)]
    max_migr_cost: Option<f64>,
    /// Largest acceptable load distance (ALBIC, COLA, scale-in).
    #[arg(long, allow_hyphen_values = true)]
    max_ld: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a manifest with its configured optimizer.
    Run {
        manifest: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// Optimizer for every scenario.
        #[arg(long)]
        optimizer: Option<String>,
        /// Simulated ticks.
        #[arg(long)]
        ticks: Option<u64>,
        /// Output directory; defaults to the manifest's `out`, then `results`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay each scenario's workload with several optimizers.
    Compare {
        manifest: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// Comma-separated comparison set; defaults to the manifest's
        /// `compare`, then milp,flux,potc.
        #[arg(long, value_delimiter = ',')]
        optimizer: Vec<String>,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one adaptation round for a cluster snapshot.
    Solve {
        snapshot: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// One of milp, brute, albic, flux, potc, cola, drain.
        #[arg(long, default_value = "milp")]
        optimizer: String,
        /// Plan file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Balanced min-cut partitioning of a weighted graph.
    Partition {
        graph: PathBuf,
        #[arg(long)]
        parts: usize,
        /// Allowed relative excess of a part over the average part weight.
        #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a manifest or scenario file without running it.
    Validate {
        manifest: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        ticks: Option<u64>,
    },
}

fn kind(name: &str) -> Result<OptimizerKind, CliError> {
    OptimizerKind::parse(name).ok_or_else(|| {
        CliError::Invalid(vec![Problem::new("--optimizer", unknown_optimizer(name))])
    })
}

fn overrides(
    t: &Tuning,
    optimizer: Option<&str>,
    ticks: Option<u64>,
) -> Result<Overrides, CliError> {
    Ok(Overrides {
        seed: t.seed,
        optimizer: optimizer.map(kind).transpose()?,
        max_migrations: t.max_migrations,
        max_migr_cost: t.max_migr_cost,
        max_ld: t.max_ld,
        ticks,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report(doc: &SummaryDoc) {
    for r in &doc.runs {
        let ld = r
            .final_load_distance
            .map_or("-".to_string(), |v| format!("{v:.3}"));
        eprintln!(
            "{} {}: {} rounds, final load distance {ld}, {} migrations",
            r.scenario, r.optimizer, r.rounds, r.total_migrations
        );
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            manifest,
            tuning,
            optimizer,
            ticks,
            out,
        } => {
            let flags = overrides(&tuning, optimizer.as_deref(), ticks)?;
            report(&commands::run(&manifest, &flags, out.as_deref())?);
        }
        Command::Compare {
            manifest,
            tuning,
            optimizer,
            ticks,
            out,
        } => {
            let flags = overrides(&tuning, None, ticks)?;
            let set = optimizer
                .iter()
                .map(|s| kind(s))
                .collect::<Result<Vec<_>, _>>()?;
            report(&commands::compare(
                &manifest,
                &flags,
                out.as_deref(),
                Some(&set),
            )?);
        }
        Command::Solve {
            snapshot,
            tuning,
            optimizer,
            out,
        } => {
            let flags = overrides(&tuning, None, None)?;
            let plan = commands::solve(&snapshot, &optimizer, &flags)?;
            emit(out.as_deref(), &to_json(&plan))?;
        }
        Command::Partition {
            graph,
            parts,
            tolerance,
            seed,
            out,
        } => {
            let doc = commands::partition(&graph, parts, tolerance, seed)?;
            emit(out.as_deref(), &to_json(&doc))?;
        }
        Command::Validate {
            manifest,
            tuning,
            optimizer,
            ticks,
        } => {
            let flags = overrides(&tuning, optimizer.as_deref(), ticks)?;
            let man = commands::validate(&manifest, &flags)?;
            let n = man.scenarios.len();
            let noun = if n == 1 { "scenario" } else { "scenarios" };
            println!("{}: ok ({n} {noun})", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
