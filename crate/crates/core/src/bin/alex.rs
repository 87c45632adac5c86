use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use alex_core::config::RunConfig;
use alex_core::error::Error;
use alex_core::ingest::write_canonical;
use alex_core::mdp::Scenario;
use alex_core::report::{compare_runs, execute_run, load_run_metrics};

#[derive(Parser)]
#[command(name = "alex", version, about = "Transactive local energy market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write a run directory.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// noderms, individual, or alex.
        #[arg(short, long, default_value = "alex")]
        scenario: Scenario,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to runs/<scenario>.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare completed runs side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Exit nonzero when an ordering check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Load the configured dataset and report every invariant violation.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Convert the configured dataset to the canonical on-disk format.
    Ingest {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            scenario,
            seed,
            out,
        } => {
            let config = load_config(&config, seed)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(scenario.key()));
            let manifest = execute_run(&config, scenario, &dir)
                .with_context(|| format!("running {} into {}", scenario.label(), dir.display()))?;
            println!(
                "{}: {} buildings, {} steps, {} rounds, final distance {:.6} -> {}",
                scenario.label(),
                manifest.buildings,
                manifest.steps,
                manifest.rounds,
                manifest.final_distance,
                dir.display()
            );
            if !manifest.converged {
                eprintln!(
                    "warning: no convergence below {} within the round limit; flagged in the manifest",
                    manifest.threshold
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { runs, out, strict } => {
            let loaded = runs
                .iter()
                .map(|d| load_run_metrics(d).with_context(|| format!("loading run {}", d.display())))
                .collect::<Result<Vec<_>>>()?;
            let comparison = compare_runs(&loaded)?;
            print!("{}", comparison.to_text());
            if let Some(path) = out {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                comparison.write_csv(file)?;
            }
            if strict && comparison.checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let config = load_config(&config, None)?;
            match config.load_dataset() {
                Ok(ds) => {
                    println!(
                        "ok: {} buildings, {} steps, {} days",
                        ds.buildings.len(),
                        ds.step_count(),
                        ds.calendar.day_count()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(Error::InvalidDataset(problems)) => {
                    for p in &problems {
                        println!("{p}");
                    }
                    bail!("{} invariant violations", problems.len())
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Ingest { config, out } => {
            let config = load_config(&config, None)?;
            let ds = config.load_dataset()?;
            write_canonical(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} buildings to {}", ds.buildings.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
