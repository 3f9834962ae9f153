use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reclaim_core::scenario::{self, Scenario};
use reclaim_core::Result;

/// Safety-margin simulator for reclaimed datacenter capacity.
#[derive(Parser)]
#[command(name = "reclaim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic traces and host capacities.
    Generate(Target),
    /// Train the DDPG agents on the training split and write checkpoints.
    Train(Target),
    /// Evaluate every configured strategy on the test split.
    Evaluate(Target),
}

#[derive(Args)]
struct Target {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Overrides the scenario's `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Target {
    fn scenario(&self) -> Result<Scenario> {
        let s = Scenario::load(&self.config)?;
        Ok(match &self.output_dir {
            Some(dir) => s.with_output_dir(dir),
            None => s,
        })
    }
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Generate(t) => {
            let s = t.scenario()?;
            let summary = scenario::generate(&s)?;
            println!(
                "wrote {} hosts x {} days to {}",
                summary.hosts,
                summary.days,
                s.output_dir.display()
            );
            println!("{:<6}  {:>10}  {:>18}", "metric", "mean usage", "underestimation");
            for m in &summary.metrics {
                println!(
                    "{:<6}  {:>9.2}%  {:>17.2}%",
                    m.metric.as_str(),
                    100.0 * m.mean_usage,
                    100.0 * m.underestimation_rate
                );
            }
        }
        Command::Train(t) => {
            let s = t.scenario()?;
            let out = scenario::train(&s)?;
            println!("trained on {} steps", out.log.len());
            for p in &out.checkpoints {
                println!("checkpoint {}", p.display());
            }
            println!("log {}", s.output_dir.join(scenario::TRAIN_LOG_FILE).display());
        }
        Command::Evaluate(t) => {
            let s = t.scenario()?;
            let cmp = scenario::evaluate(&s)?;
            print!("{}", scenario::format_comparison(&cmp));
            println!("reports in {}", s.output_dir.join(scenario::EVAL_DIR).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
