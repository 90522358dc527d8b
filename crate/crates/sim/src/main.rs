use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adsched_sim::artifacts::{run_experiment, run_partition, run_report, run_sweep_occupancy};
use adsched_sim::config::ScenarioConfig;
use adsched_sim::SimError;

/// Sensor-network attack-detection scheduling simulator.
#[derive(Parser)]
#[command(name = "adsched", version, about)]
struct Cli {
    /// Print the default configuration (every recognized key) and exit.
    #[arg(long)]
    print_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario end to end and write the artifact bundle.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory from the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write partition, influence, and correlation tables for the scenario.
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate attacked-subset occupancy over the standard grid.
    SweepOccupancy {
        #[arg(long)]
        out: PathBuf,
        /// Monte-Carlo draws per grid cell.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Regenerate plots and tables from a written artifact directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), SimError> {
    if cli.print_default_config {
        print!("{}", ScenarioConfig::default().to_toml());
        return Ok(());
    }
    let command = cli
        .command
        .ok_or_else(|| SimError::Config("no subcommand given; see --help".into()))?;
    match command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.scenario.out));
            let bundle = run_experiment(&cfg, &out_dir)?;
            println!(
                "wrote {} artifacts to {}",
                bundle.files.len(),
                bundle.out_dir.display()
            );
            Ok(())
        }
        Command::Partition { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.scenario.out));
            let bundle = run_partition(&cfg, &out_dir)?;
            println!(
                "wrote {} artifacts to {}",
                bundle.files.len(),
                bundle.out_dir.display()
            );
            Ok(())
        }
        Command::SweepOccupancy { out, samples, seed } => {
            let bundle = run_sweep_occupancy(&out, samples, seed)?;
            println!(
                "wrote {} artifacts to {}",
                bundle.files.len(),
                bundle.out_dir.display()
            );
            Ok(())
        }
        Command::Report { input } => {
            let bundle = run_report(&input)?;
            println!("refreshed {} artifacts in {}", bundle.files.len(), input.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(SimError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(SimError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}
