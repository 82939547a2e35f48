use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use agedcsi::experiments::{self, Scenario, SweepResult};
use agedcsi::Result;

/// Intermittent CSI estimation experiments. Writes CSV to --out or stdout.
#[derive(Debug, Parser)]
#[command(name = "agedcsi", version)]
struct Cli {
    /// Scenario file (key = value). Defaults: M=64 K=40 C=50 zf, 10 dB, rho ~ U[0.6, 0.9].
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scenario Monte Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Overrides the scenario schedule horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-user SINR and rate at the given CSI ages.
    Rates {
        #[arg(long, value_parser = parse_list::<usize>, default_value = "0,1,2,3,4,5")]
        ages: List<usize>,
    },
    /// Optimal update frequency against correlation for each pilot length.
    SweepRho {
        #[arg(long, value_parser = parse_list::<usize>, default_value = "5,30")]
        pilots: List<usize>,
        #[arg(long, value_parser = parse_list::<String>, default_value = "mf,zf")]
        precoders: List<String>,
    },
    /// Sum rate against pilot length for each SNR and precoder.
    SweepPilot {
        #[arg(long, value_parser = parse_list::<f64>, default_value = "-20,-10,0,10,20", allow_hyphen_values = true)]
        snr_db: List<f64>,
        #[arg(long, value_parser = parse_list::<String>, default_value = "mf,zf")]
        precoders: List<String>,
    },
    /// Best pilot length and sum rate against user count.
    SweepUsers {
        #[arg(long, value_parser = parse_list::<usize>, default_value = "5,10,15,20,25,30,35,40,45,50")]
        users: List<usize>,
    },
    /// Monte Carlo check of the closed-form SINR.
    Validate {
        #[arg(long, value_parser = parse_list::<usize>, default_value = "0,1,2,5")]
        ages: List<usize>,
    },
    /// Realize a per-block pilot schedule and report its statistics.
    Schedule {
        /// Pilot length; the optimal one when omitted.
        #[arg(long)]
        pilots: Option<usize>,
        /// Where to write the schedule (one line per block).
        #[arg(long)]
        schedule_out: Option<PathBuf>,
    },
}

/// Comma-separated values; an empty string is an empty list.
#[derive(Clone, Debug)]
struct List<T>(Vec<T>);

fn parse_list<T: FromStr>(text: &str) -> std::result::Result<List<T>, String>
where
    T::Err: Display,
{
    if text.trim().is_empty() {
        return Ok(List(Vec::new()));
    }
    text.split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|e| format!("{item:?}: {e}"))
        })
        .collect::<std::result::Result<Vec<T>, String>>()
        .map(List)
}

fn run(cli: Cli) -> Result<()> {
    let mut scenario = match &cli.scenario {
        Some(path) => Scenario::from_path(path)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    if let Some(trials) = cli.trials {
        scenario.trials = trials;
    }
    if let Some(horizon) = cli.horizon {
        scenario.horizon = horizon;
    }

    let result: SweepResult = match &cli.command {
        Command::Rates { ages } => experiments::cmd_rates(&scenario, &ages.0)?,
        Command::SweepRho { pilots, precoders } => {
            let names: Vec<&str> = precoders.0.iter().map(String::as_str).collect();
            experiments::cmd_sweep_rho(&scenario, &pilots.0, &names)?
        }
        Command::SweepPilot { snr_db, precoders } => {
            let names: Vec<&str> = precoders.0.iter().map(String::as_str).collect();
            experiments::cmd_sweep_pilot(&scenario, &snr_db.0, &names)?
        }
        Command::SweepUsers { users } => experiments::cmd_sweep_users(&scenario, &users.0)?,
        Command::Validate { ages } => {
            experiments::cmd_validate(&scenario, &ages.0, scenario.trials, scenario.seed)?
        }
        Command::Schedule {
            pilots,
            schedule_out,
        } => {
            let (schedule, stats) =
                experiments::cmd_schedule(&scenario, *pilots, scenario.horizon, scenario.seed)?;
            if let Some(path) = schedule_out {
                std::fs::write(path, schedule.to_text())?;
            }
            stats
        }
    };

    let csv = result.to_csv()?;
    match &cli.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agedcsi: {e}");
            ExitCode::FAILURE
        }
    }
}
