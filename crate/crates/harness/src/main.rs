use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use koopman_adapt::config::ExperimentConfig;
use koopman_adapt::experiment::{default_checkpoint, sensitivity_sweep, train_prior, Experiment};
use koopman_adapt::{io, report, verify};

#[derive(Parser)]
#[command(name = "koopman-adapt", version, about = "Adaptive Koopman MPC experiments on the cartpole")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate nominal data and train the embedding prior.
    TrainOffline {
        config: PathBuf,
        /// Checkpoint path; defaults to `<output_dir>/prior.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all configured controllers against the true plant.
    Run { config: PathBuf },
    /// Repeat the experiment for each `sweep_pcts` parameter scaling.
    Sweep { config: PathBuf },
    /// Run the numerical oracle checks.
    Verify,
    /// Summarize an experiment directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::TrainOffline { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let path = out.unwrap_or_else(|| default_checkpoint(&cfg.output_dir));
            let o = train_prior(&cfg)?;
            io::write_dataset(&cfg.output_dir.join("dataset"), &o.dataset)?;
            io::write_json(&path, &o.checkpoint)?;
            println!(
                "generated {} transitions in {:.1}s, trained in {:.1}s",
                o.dataset.len(),
                o.generation_seconds,
                o.train_seconds
            );
            if let Some(v) = &o.checkpoint.validation {
                println!(
                    "validation error: trained {:.3e}, least-squares start {:.3e}, untrained {:.3e}",
                    v.trained, v.least_squares_start, v.untrained
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.output_dir.clone();
            let exp = Experiment::prepare(cfg)?;
            exp.run_and_write(exp.cfg.true_plant, &dir)?;
            print!("{}", report::render(&report::analyze(&dir)?));
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.output_dir.clone();
            let pcts = cfg.sweep_pcts.clone();
            let exp = Experiment::prepare(cfg)?;
            for r in sensitivity_sweep(&exp, &pcts, &dir)? {
                println!(
                    "pct {:.2} {:<18} last-second {:.3e} final {:.3e} ({} runs)",
                    r.pct, r.controller, r.final_second_error, r.final_error, r.runs
                );
            }
        }
        Command::Verify => {
            let mut ok = true;
            for c in verify::all_checks() {
                ok &= c.passed;
                println!(
                    "{} {:<22} {} [{:.2}s]",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail,
                    c.seconds
                );
            }
            return Ok(ok);
        }
        Command::Report { dir } => {
            let r = report::analyze(&dir).with_context(|| format!("analyzing {}", dir.display()))?;
            print!("{}", report::render(&r));
            return Ok(r.summary_consistent);
        }
    }
    Ok(true)
}
