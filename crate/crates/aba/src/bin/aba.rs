//! Command-line front end over the library: `train`, `eval`, `sweep`,
//! `embed`, `report`. Exit code 0 on success; on failure, one
//! machine-readable JSON error line on stderr and a nonzero exit.

use aba::harness::{self, ExperimentConfig, SweepSpec};
use aba::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "aba", version, about = "adversarial Bayesian augmentation training lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per a config file and write results, metrics and a checkpoint.
    Train { config: PathBuf },
    /// Evaluate a checkpoint on the config's source and target domains.
    Eval { checkpoint: PathBuf, config: PathBuf },
    /// Grid over one hyperparameter; one run per (value, seed) cell.
    Sweep {
        config: PathBuf,
        /// adv_steps | adv_lr | layers | num_bayes_samples
        #[arg(long)]
        param: String,
        /// comma-separated values, e.g. 0,5,10
        #[arg(long)]
        values: String,
        /// seeds per cell
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Project penultimate features of all domains and augmentation
    /// families onto the top-2 principal components; write CSV + SVG.
    Embed {
        checkpoint: PathBuf,
        config: PathBuf,
        /// images per group
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
    /// Aggregate one or more results CSVs into a comparison table.
    Report {
        /// results.csv files from `train` runs
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        /// where to write the aggregated CSV
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let artifacts = harness::run_experiment(&cfg)?;
            println!("results: {}", artifacts.results_csv.display());
            println!("metrics: {}", artifacts.metrics_csv.display());
            println!("checkpoint: {}", artifacts.checkpoint.display());
            for line in std::fs::read_to_string(&artifacts.results_csv)?.lines().skip(1) {
                println!("{}", line);
            }
        }
        Command::Eval { checkpoint, config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for (domain, acc) in harness::eval_checkpoint(&cfg, &checkpoint)? {
                println!("{},{:.6}", domain, acc);
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            seeds,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let spec = SweepSpec {
                parameter: param.parse()?,
                values: values.split(',').map(|s| s.trim().to_string()).collect(),
                seeds,
            };
            let csv = harness::sweep(&cfg, &spec)?;
            println!("sweep: {}", csv.display());
        }
        Command::Embed { checkpoint, config, n } => {
            let cfg = ExperimentConfig::load(&config)?;
            let artifacts = harness::embed_features(&cfg, &checkpoint, n)?;
            println!("coordinates: {}", artifacts.coords_csv.display());
            println!("scatter: {}", artifacts.svg.display());
        }
        Command::Report { csvs, out } => {
            let table = harness::read_results(&csvs)?;
            print!("{}", harness::render_text(&table));
            harness::write_report_csv(&table, &out)?;
            println!("written: {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        let msg = serde_json::json!({ "error": e.to_string() });
        eprintln!("{}", msg);
        std::process::exit(1);
    }
}
