use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use siglab::Result;
use siglab::experiment::{
    ExperimentConfig, ProtocolOptions, RunOptions, RunSummary, checkpoint, plot, protocol_report, run_experiment,
    summary,
};

/// Contextual signaling game experiments.
#[derive(Parser)]
#[command(name = "siglab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all runs of an experiment, writing metrics, checkpoints and a summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Train runs concurrently.
        #[arg(long)]
        parallel_runs: bool,
    },
    /// Summarize a metrics CSV at each run's final iteration.
    Report {
        #[arg(long)]
        csv: PathBuf,
        /// Row label in the table.
        #[arg(long, default_value = "run")]
        label: String,
    },
    /// Emission and referent distributions of a trained checkpoint.
    Protocol {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Contexts sampled per target; 0 enumerates all ordered contexts.
        #[arg(long, default_value_t = 5)]
        contexts: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write emissions.csv and referents.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one SVG chart per metric next to the CSV (or into --out).
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| siglab::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            parallel_runs,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let mut opts = RunOptions::from_env()?;
            opts.parallel_runs = parallel_runs;
            let output = run_experiment(&cfg, &opts)?;
            print!("{}", output.summary.to_table());
            eprintln!("metrics: {}", output.csv.display());
            eprintln!("summary: {}", output.summary_csv.display());
        }
        Command::Report { csv, label } => {
            let rows = summary::read_csv(&csv)?;
            print!("{}", RunSummary::from_rows(&label, &rows)?.to_table());
        }
        Command::Protocol {
            checkpoint: ckpt_path,
            config,
            contexts,
            samples,
            seed,
            out,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let ckpt = checkpoint::load(&ckpt_path)?;
            let opts = ProtocolOptions {
                contexts_per_target: contexts,
                samples,
                seed,
            };
            let report = protocol_report(&ckpt.theta, &cfg, &opts)?;
            print!("{}", report.to_text(3));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| siglab::Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                write(&dir.join("emissions.csv"), &report.emissions_csv())?;
                write(&dir.join("referents.csv"), &report.referents_csv())?;
            }
        }
        Command::Plot { csv, out } => {
            let dir = out.unwrap_or_else(|| csv.parent().unwrap_or(Path::new(".")).join("plots"));
            for p in plot::plot_metrics(&csv, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
