use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dlstm::commands::{cmd_compare, cmd_gen_data, cmd_run, CommandError};

#[derive(Parser)]
#[command(name = "dlstm", version, about = "Distributed LSTM load forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic daily load series as CSV.
    GenData {
        #[arg(long, default_value_t = 730)]
        days: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train and evaluate per a config file.
    Run { config: PathBuf },
    /// Tabulate test metrics from two or more report.json files.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { days, seed, out } => {
            let n = cmd_gen_data(days, seed, &out)?;
            eprintln!("wrote {n} records to {}", out.display());
        }
        Command::Run { config } => {
            let outcome = cmd_run(&config)?;
            let m = &outcome.report.metrics;
            let t = &outcome.timings;
            println!(
                "{:?}: test MAPE {:.2}% MAE {:.3} MSE {:.3}; final disagreement {:.3e}",
                outcome.report.training.schedule,
                m.mape * 100.0,
                m.mae,
                m.mse_plain,
                outcome.report.training.final_disagreement
            );
            println!(
                "wall clock: total {:.2}s (local {:.2}s, consensus {:.2}s, evaluation {:.2}s) on {} workers",
                t.total_seconds, t.local_seconds, t.consensus_seconds, t.evaluation_seconds, t.workers
            );
            println!("results in {}", outcome.output_dir.display());
        }
        Command::Compare { reports, csv } => {
            let table = cmd_compare(&reports)?;
            print!("{}", table.to_markdown());
            if let Some(path) = csv {
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                table.write_csv(file)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<CommandError>() {
                Some(CommandError::Diverged { .. }) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
